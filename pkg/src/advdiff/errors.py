"""Exception types shared across the package."""

from __future__ import annotations


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible. Names both shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, self.shapes))}")


class AlignmentError(ValueError):
    """Raised when two graphs that must share a node set differ in size."""


class SingularMatrixError(ArithmeticError):
    """Raised when LU factorization meets a pivot below the singularity floor."""

    def __init__(self, pivot_index: int, pivot_value: float):
        self.pivot_index = int(pivot_index)
        self.pivot_value = float(pivot_value)
        super().__init__(
            f"matrix is singular to working precision: |pivot| = {pivot_value:.3e} "
            f"at index {pivot_index}"
        )


class NumericalError(ArithmeticError):
    """Raised when a computation produces NaN/Inf or violates a residual bound."""


class ConfigError(ValueError):
    """Raised for invalid model, training, or experiment configuration."""


class TrainingAbort(RuntimeError):
    """Raised when training hits a non-finite loss; carries diagnostics."""

    def __init__(self, epoch: int, loss_history: list[float]):
        self.epoch = int(epoch)
        self.loss_history = list(loss_history)
        super().__init__(
            f"non-finite training loss at epoch {epoch}; "
            f"last losses: {[f'{v:.4g}' for v in loss_history[-5:]]}"
        )
