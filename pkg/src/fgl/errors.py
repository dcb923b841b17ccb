"""Exception hierarchy shared by all modules."""


class FGLError(Exception):
    """Base class for library errors."""


class InsufficientRankError(FGLError, ValueError):
    pass


class CollinearFactorsError(FGLError, ValueError):
    pass


class DegenerateGridError(FGLError, ValueError):
    pass


class ConvergenceError(FGLError, RuntimeError):
    """Raised when the graphical lasso runs out of sweeps.

    The last iterate and its residual are kept so callers can inspect or
    resume from them.
    """

    def __init__(self, message, last_W=None, last_beta=None, residual=None):
        super().__init__(message)
        self.last_W = last_W
        self.last_beta = last_beta
        self.residual = residual


class NotPositiveDefiniteError(FGLError, ArithmeticError):
    pass


class DegenerateFactorBlockError(FGLError, ArithmeticError):
    pass


class RobustSpectrumError(FGLError, ArithmeticError):
    pass


class DegenerateDenominatorError(FGLError, ArithmeticError):
    pass


class DegenerateFrontierError(FGLError, ValueError):
    pass


class ZeroMeanError(FGLError, ValueError):
    pass


class PortfolioWipedOutError(FGLError, ArithmeticError):
    pass


class BankruptcyError(FGLError, ArithmeticError):
    pass


class EstimationFailure(FGLError, RuntimeError):
    """A backtest window whose precision estimate could not be computed."""

    def __init__(self, message, window_end=None):
        super().__init__(message)
        self.window_end = window_end


class DataFormatError(FGLError, ValueError):
    """Malformed input file.  ``kind`` names the failure (``missing_file``,
    ``bad_header``, ``ragged_row``, ``non_numeric``, ``duplicate_date``,
    ``too_small``)."""

    def __init__(self, message, kind="format", line=None, column=None):
        super().__init__(message)
        self.kind = kind
        self.line = line
        self.column = column
