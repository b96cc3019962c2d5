"""Population dynamics as a continuous flow in expression space."""

from .fields import (
    PIECE_KINDS, FieldPiece, IntraPiece, MappedPiece, PieceSpec, StructuredField, gene_structure,
    time_features,
)
from .flow import (
    CNFConfig, CNFResult, SimulationReport, TrajectoryBatch, interval_distances, load_trajectory,
    simulate, train_cnf, zero_field_baseline,
)
from .integrate import DEFAULT_STEPS, integrate_ode, jacobian_trace, log_density_change, rk4_step
from .transport import equal_size_indices, optimal_matching, wasserstein_distance, wasserstein_loss

__all__ = [
    "PIECE_KINDS", "FieldPiece", "IntraPiece", "MappedPiece", "PieceSpec", "StructuredField",
    "gene_structure", "time_features",
    "CNFConfig", "CNFResult", "SimulationReport", "TrajectoryBatch", "interval_distances",
    "load_trajectory", "simulate", "train_cnf", "zero_field_baseline",
    "DEFAULT_STEPS", "integrate_ode", "jacobian_trace", "log_density_change", "rk4_step",
    "equal_size_indices", "optimal_matching", "wasserstein_distance", "wasserstein_loss",
]
