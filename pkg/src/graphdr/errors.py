"""Exception hierarchy shared by every graphdr module."""


class GraphDRError(Exception):
    """Base class for all library errors."""


class ShapeError(GraphDRError, ValueError):
    pass


class ContractError(GraphDRError, ValueError):
    """An argument violates a documented precondition."""


class ConvergenceError(GraphDRError, RuntimeError):
    pass


class SingularityError(GraphDRError, ArithmeticError):
    pass


class ConnectivityError(GraphDRError, ValueError):
    pass


class DegenerateDegreeError(GraphDRError, ValueError):
    pass


class ParseError(GraphDRError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DivergenceError(GraphDRError, FloatingPointError):
    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


class CalibrationError(GraphDRError, RuntimeError):
    def __init__(self, row, message="bandwidth calibration failed"):
        super().__init__(f"{message} (row {row})")
        self.row = row


class StratificationError(GraphDRError, ValueError):
    pass


class ValidationError(GraphDRError, ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))
