"""Training and evaluation harnesses."""

from .base import (
    BaseTask, FitResult, TrainConfig, cross_entropy_graph, masked_mse_graph, minibatches,
)
from .classification import ClassificationResult, ClassificationTask, train_classification
from .finetune import FINETUNE_HARNESSES, FinetuneResult, pretrain_finetune
from .forecasting import (
    FORECASTERS, ForecastResult, RecurrentForecastTask, SimultaneousForecastTask, Windows,
    check_horizon, persistence_mse, train_forecast_recurrent, train_forecast_simultaneous,
)
from .imputation import (
    ImputationResult, ImputationTask, draw_hidden, imputation_loss, mask_expression,
    train_imputation,
)
from .metrics import macro_auc, masked_mse, mean_series_pcc, pcc
from .selection import ALPHA_GRID, AlphaSelection, select_alpha

__all__ = [
    "ALPHA_GRID",
    "AlphaSelection",
    "BaseTask",
    "ClassificationResult",
    "ClassificationTask",
    "FINETUNE_HARNESSES",
    "FORECASTERS",
    "FinetuneResult",
    "FitResult",
    "ForecastResult",
    "ImputationResult",
    "ImputationTask",
    "RecurrentForecastTask",
    "SimultaneousForecastTask",
    "TrainConfig",
    "Windows",
    "check_horizon",
    "cross_entropy_graph",
    "draw_hidden",
    "imputation_loss",
    "macro_auc",
    "mask_expression",
    "masked_mse",
    "masked_mse_graph",
    "mean_series_pcc",
    "minibatches",
    "pcc",
    "persistence_mse",
    "pretrain_finetune",
    "select_alpha",
    "train_classification",
    "train_forecast_recurrent",
    "train_forecast_simultaneous",
    "train_imputation",
]
