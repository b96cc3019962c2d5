"""Validation-loss selection of the reweighting coefficient alpha."""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence

from ..errors import ConfigError
from ..model import BFRegModel

ALPHA_GRID = (0.0, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3)


@dataclass
class AlphaSelection:
    alpha: float
    model: BFRegModel
    result: Any
    val_losses: Dict[float, float] = field(default_factory=dict)

    def table(self) -> List[Dict[str, float]]:
        return [{"alpha": a, "val_loss": v} for a, v in self.val_losses.items()]


def select_alpha(build_model: Callable[[float], BFRegModel],
                 train_fn: Callable[[BFRegModel], Any],
                 grid: Sequence[float] = ALPHA_GRID) -> AlphaSelection:
    """
    Train one model per alpha in ``grid`` and keep the one whose best
    validation loss is smallest. Ties go to the earlier grid entry.

    ``train_fn`` returns a harness result whose ``fit.best_val_loss`` is set,
    i.e. it must train with a validation split.
    """
    if not grid:
        raise ConfigError("alpha grid is empty")
    chosen = None
    losses: Dict[float, float] = {}
    for alpha in grid:
        model = build_model(float(alpha))
        result = train_fn(model)
        val = result.fit.best_val_loss
        if val is None or not result.fit.val_losses:
            raise ConfigError("alpha selection needs a validation split")
        losses[float(alpha)] = float(val)
        logging.debug(f"BFReg: alpha={alpha:g} best validation loss {val:.6g}")
        if chosen is None or val < losses[chosen.alpha]:
            chosen = AlphaSelection(float(alpha), model, result)
    chosen.val_losses = losses
    logging.info(f"BFReg: selected alpha={chosen.alpha:g}")
    return chosen
