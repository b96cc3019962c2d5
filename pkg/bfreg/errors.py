"""
Errors for BFReg
================

Every failure the library raises on purpose derives from ``BFRegError`` so the
command line can turn it into a non-zero exit status with a readable message.
"""


class BFRegError(Exception):
    """Root of all errors raised by bfreg."""


class ShapeError(BFRegError, ValueError):
    """Operand shapes are inconsistent for the requested operation."""


class UnsupportedPrimitiveError(BFRegError):
    """A computation asked for an operation outside the supported closure."""


class NonFiniteError(BFRegError, FloatingPointError):
    """NaN or Inf appeared in a tensor."""


class GradientError(BFRegError):
    """Gradient bookkeeping failed (non-scalar root, missing gradient)."""


class ParameterError(BFRegError, KeyError):
    """A named parameter is missing, duplicated, or has the wrong shape."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class KnowledgeError(BFRegError):
    """Knowledge files or knowledge-base operations are invalid."""


class DatasetError(BFRegError):
    """Dataset files or dataset contents are invalid for the task."""


class ConfigError(BFRegError):
    """Run configuration is malformed."""


class TrainingDivergedError(BFRegError):
    """The training loss became non-finite."""


class TrainingError(BFRegError):
    """Training broke a guarantee of the run, such as a frozen trunk changing."""


class IntegrationError(BFRegError):
    """ODE integration produced a non-finite state or was misconfigured."""


class CheckpointError(BFRegError):
    """A checkpoint cannot be restored against the current knowledge base."""


class DiscoveryError(BFRegError):
    """The knowledge-completion protocol cannot run or aggregate."""
