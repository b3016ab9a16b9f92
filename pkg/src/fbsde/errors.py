"""Exception hierarchy shared across the package."""


class FBSDEError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FBSDEError, ValueError):
    """Tensor operands have incompatible dimensions."""


class ParameterError(FBSDEError, ValueError):
    """Invalid physical parameter, configuration value, or call contract."""


class DomainError(FBSDEError, ValueError):
    """Input lies outside the documented domain of a function."""


class IntegrationError(FBSDEError, RuntimeError):
    """Dynamics evaluation hit a coordinate singularity."""


class RolloutError(FBSDEError, RuntimeError):
    """A trajectory batch diverged or failed mid-rollout."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class TrainingDiverged(FBSDEError, RuntimeError):
    """Training was halted by the divergence guard."""


class ConfigError(FBSDEError, ValueError):
    """Run configuration file failed validation."""


class CheckpointError(FBSDEError, RuntimeError):
    """Checkpoint file is malformed or inconsistent with the configuration."""


class ResolutionError(FBSDEError, RuntimeError):
    """An ODE grid is too coarse for the requested accuracy."""


class ToleranceError(FBSDEError, RuntimeError):
    """A quadrature routine could not reach the requested tolerance."""
