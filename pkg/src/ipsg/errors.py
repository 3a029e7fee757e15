"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent user input (dimensions, files, configs)."""


class FormatError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """A parameter lies outside the range where a formula or bound applies."""


class AssumptionError(DomainError):
    """Gram matrix is rank deficient, so the least-squares solution is not unique."""


class NumericalError(ArithmeticError):
    """Non-finite values, failed factorizations, or non-convergence."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
