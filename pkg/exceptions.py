"""Error hierarchy. Every error maps onto a process exit code."""


class DsPoolError(Exception):
    """Base error carrying an exit code and a human readable detail."""

    exit_code: int = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvalidInputError(DsPoolError):
    pass


class ShapeMismatchError(InvalidInputError):
    pass


class OracleCapacityError(DsPoolError):
    pass


class DegenerateGraphError(DsPoolError):
    """Raised when x·Ax = 0, i.e. the graph offers no grouping evidence."""


class NumericalError(DsPoolError):
    pass


class TrainingDivergenceError(NumericalError):
    pass


class HierarchyError(DsPoolError):
    pass


class UsageError(DsPoolError):
    exit_code = 1
