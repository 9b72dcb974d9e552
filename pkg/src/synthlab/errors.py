"""Exception hierarchy shared across the package.

Every error carries a short ``category`` string; the CLI prints it so that
failures are machine-parsable.
"""


class SynthlabError(Exception):
    category = "error"


class ShapeError(SynthlabError, ValueError):
    category = "shape"


class DegenerateRowError(ShapeError):
    category = "degenerate-row"


class NumericError(SynthlabError, ArithmeticError):
    category = "numeric"


class ConfigError(SynthlabError, ValueError):
    category = "config"


class DegenerateSampleError(SynthlabError, ValueError):
    category = "degenerate-sample"


class AliasingError(SynthlabError, ValueError):
    category = "aliasing"


class ContextOverflowError(SynthlabError, ValueError):
    category = "context-overflow"


class HorizonOverflowError(SynthlabError, ValueError):
    category = "horizon-overflow"


class FormatError(SynthlabError, ValueError):
    category = "format"


class InsufficientDataError(SynthlabError, ValueError):
    category = "insufficient-data"


class IngestionError(SynthlabError, ValueError):
    category = "ingestion"

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class SplitError(SynthlabError, ValueError):
    category = "split"
