"""
BFReg - Knowledge-Structured Expression Modelling
=================================================

Neural models whose wiring follows biological knowledge: gene regulation,
protein interaction and pathway membership. Trains imputation,
classification, forecasting and population-trajectory models, and ranks
missing regulatory edges.
"""

import logging
from typing import List, Optional

from .core import RunTracker, get_tracker, init_tracker
from .errors import BFRegError
from .knowledge import KnowledgeBase, load_knowledge, save_knowledge
from .model import BFRegModel, HeadSpec, ModelConfig

__version__ = "0.1.0"
__all__ = [
    "BFRegError",
    "BFRegModel",
    "HeadSpec",
    "KnowledgeBase",
    "ModelConfig",
    "RunTracker",
    "add_tags",
    "get_tracker",
    "init",
    "load_knowledge",
    "save_knowledge",
]

logging.getLogger(__name__).addHandler(logging.NullHandler())


def init(task: Optional[str] = None, seed: Optional[int] = None,
         tags: Optional[List[str]] = None, log_path=None, debug: bool = False) -> RunTracker:
    """
    Initialize the global run tracker used by every harness that is not
    handed one explicitly.

    Args:
        task (str, optional): Task name stamped on every span.
        seed (int, optional): Run seed stamped on every span.
        tags (List[str], optional): Tags to associate with the run.
        log_path (optional): File receiving one JSON record per finished span.
        debug (bool): Enable debug logging. Defaults to False.

    Returns:
        RunTracker: The initialized tracker instance.

    Example:
        >>> import bfreg
        >>> tracker = bfreg.init(task="impute", seed=0)
    """
    if debug:
        logging.basicConfig(level=logging.DEBUG)
    tracker = init_tracker(task=task, seed=seed, tags=tags, log_path=log_path)
    logging.info(f"BFReg: tracking run {tracker.run_id}")
    return tracker


def add_tags(tags: List[str]):
    """
    Add tags to the global tracker.

    Example:
        >>> bfreg.add_tags(["ablation", "gene-only"])
    """
    tracker = get_tracker()
    if not tracker:
        raise RuntimeError("Tracker not initialized. Call bfreg.init() first.")
    tracker.add_tags(tags)
