class BilateralSolverError(Exception):
    pass


class ParameterError(BilateralSolverError, ValueError):
    pass


class ShapeError(BilateralSolverError, ValueError):
    pass


class AssemblyError(BilateralSolverError, ValueError):
    pass


class NumericalError(BilateralSolverError, ArithmeticError):
    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class InternalError(BilateralSolverError, RuntimeError):
    pass
