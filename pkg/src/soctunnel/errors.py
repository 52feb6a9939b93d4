"""Exception types raised across the package."""


class ConfigError(ValueError):
    """A configuration invariant is violated."""


class InsufficientBoundStates(RuntimeError):
    """The trap does not support the four bound states the model needs."""


class SymmetryError(RuntimeError):
    """Symmetry adaptation or the overlap-matrix structure check failed."""


class StepSizeError(RuntimeError):
    """An explicit integrator lost unitarity beyond tolerance."""


class PropagationError(RuntimeError):
    """Non-finite values appeared while propagating a wavefunction."""

    def __init__(self, step: int, message: str = "non-finite wavefunction"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class NoFeatureError(ValueError):
    """A scan contains no region above the requested level."""
