from typing import Any


class BlendConvError(Exception):
    """Base class for every error raised by blendconv."""

    exit_code = 1


class InputError(BlendConvError):
    """Bad input: malformed files, invalid indices or config."""

    exit_code = 1


class NumericalError(BlendConvError):
    """A computation produced a degenerate or non-finite result."""

    exit_code = 2


class DomainError(InputError, ValueError):
    """Raised when an index or coordinate is outside its domain."""

    ...


class ParseError(InputError):
    """Raised when an input file cannot be parsed."""

    def __init__(self, path: Any, line: int, message: str) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ConfigError(InputError):
    """Raised when configuration values are inconsistent."""

    ...


class DegenerateCloudError(InputError):
    """Raised when a point cloud has zero spatial extent."""

    ...


class UnsupportedModeError(InputError):
    """Raised when an operation needs a different radial mode."""

    ...


class SymmetryViolationError(InputError):
    """Raised when a kernel grid is not symmetric around the pole."""

    def __init__(self, variation: float) -> None:
        self.variation = variation
        super().__init__(f"kernel is not zonal, max azimuthal variation {variation:.3e}")


class StateError(InputError):
    """Raised when an object is used before it has been fitted."""

    ...


class DegeneracyError(NumericalError):
    """Raised when Gram-Schmidt meets a (near) zero norm."""

    ...


class NonFiniteError(NumericalError):
    """Raised when an evaluation or gradient is NaN or infinite."""

    ...


class DivergenceError(NumericalError):
    """Raised when training loss blows up."""

    def __init__(self, message: str, history: list[Any]) -> None:
        self.history = history
        super().__init__(message)


class UndefinedSimilarityError(NumericalError):
    """Raised when a similarity is undefined for the given descriptors."""

    ...


class NondifferentiableError(NumericalError):
    """Raised when a finite-difference stencil straddles a kink."""

    ...
