"""Exception types shared across the package.

Every error raised by the public API derives from TrtlsError so callers can
catch one base class. The CLI maps these onto process exit codes.
"""

from __future__ import annotations


class TrtlsError(Exception):
    """Base class for all package errors."""


class ShapeError(TrtlsError):
    """Operands have incompatible or malformed dimensions."""


class BoundsError(TrtlsError):
    """An index is outside the valid range for the tensor."""


class CapacityError(TrtlsError):
    """A requested dense materialization would exceed the configured cap."""


class SingularSliceError(TrtlsError):
    """A spectral slice is singular to working precision."""

    def __init__(self, slice_index: int, smin: float, message: str | None = None):
        self.slice_index = slice_index
        self.smin = smin
        if message is None:
            message = (
                f"spectral slice {slice_index} is singular to working precision "
                f"(smallest singular value {smin:.3e})"
            )
        super().__init__(message)


class SingularTubeError(TrtlsError):
    """A tube has a near-zero spectral component and cannot be inverted."""

    def __init__(self, component_index: int, value: complex):
        self.component_index = component_index
        self.value = value
        super().__init__(
            f"tube spectral component {component_index} is {value!r}; "
            "tube is not invertible"
        )


class NumericalConsistencyError(TrtlsError):
    """A round trip produced a larger numerical residue than allowed."""


class DegenerateIterateError(TrtlsError):
    """An iterate cannot be normalized (scaling entry is numerically zero)."""


class DivergenceError(TrtlsError):
    """An iterate left the representable range (NaN or Inf appeared)."""

    def __init__(self, iteration: int, message: str | None = None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class FormatError(TrtlsError):
    """A file does not conform to the expected container format."""


class ConvergenceError(TrtlsError):
    """The iteration budget was exhausted before the tolerance was met."""
