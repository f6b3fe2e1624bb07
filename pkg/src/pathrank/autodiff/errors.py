"""Errors raised by the autodiff core."""


class AutodiffError(Exception):
    """Base exception for autodiff failures."""

    code = "autodiff"


class DimensionError(AutodiffError):
    """Raised when operand shapes are incompatible."""

    code = "dimension"

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        """Store the op name and every offending shape."""
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(shape) for shape in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class NonFiniteError(AutodiffError):
    """Raised when a forward op produces NaN or Inf."""

    code = "non-finite"


class BackwardError(AutodiffError):
    """Raised when backward is requested on an invalid loss."""

    code = "backward"
