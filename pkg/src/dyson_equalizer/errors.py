"""Exception hierarchy shared by all modules."""


class DysonEqualizerError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(DysonEqualizerError, ValueError):
    pass


class ShapeMismatch(InvalidInput):
    pass


class EmptyInput(InvalidInput):
    pass


class RankOutOfRange(InvalidInput):
    pass


class InfeasibleSupport(InvalidInput):
    pass


class ParseError(InvalidInput):
    pass


class TooLarge(InvalidInput):
    pass


class ZeroRowOrColumn(InvalidInput):
    """Input has rows or columns that are entirely zero.

    The offending indices are kept on the exception so callers (and the CLI)
    can report or drop them.
    """

    def __init__(self, rows, cols):
        self.rows = [int(i) for i in rows]
        self.cols = [int(j) for j in cols]
        parts = []
        if self.rows:
            parts.append(f"zero rows {self.rows}")
        if self.cols:
            parts.append(f"zero columns {self.cols}")
        super().__init__("matrix has " + " and ".join(parts))


class NumericalFailure(DysonEqualizerError, ArithmeticError):
    pass


class DegenerateMatrix(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    def __init__(self, max_iter, last_residual, what="solver"):
        self.max_iter = int(max_iter)
        self.last_residual = float(last_residual)
        super().__init__(
            f"{what} did not converge in {self.max_iter} iterations "
            f"(last residual {self.last_residual:.3e})"
        )
