"""Exception types shared across the package."""


class SaffError(Exception):
    """Base class for package errors."""


class DimensionError(SaffError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(SaffError, ValueError):
    """A precondition of an operation was violated."""


class ValidationError(SaffError, ValueError):
    """Configuration or data failed validation."""


class NonFiniteError(SaffError, ArithmeticError):
    """A forward pass produced NaN or Inf."""


class DivergenceError(SaffError, RuntimeError):
    """Training produced a non-finite loss component."""

    def __init__(self, component, epoch=None, step=None):
        self.component = component
        self.epoch = epoch
        self.step = step
        where = "" if epoch is None else f" (epoch {epoch}, step {step})"
        super().__init__(f"non-finite loss component {component!r}{where}")


class ParseError(SaffError, ValueError):
    """A data or config file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
