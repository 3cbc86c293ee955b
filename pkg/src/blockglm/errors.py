"""Exception taxonomy shared across the package."""


class DataFormatError(ValueError):
    """Malformed input data (LIBSVM lines, shard files, weight files)."""


class TransportError(RuntimeError):
    """A collective could not complete (disconnect, timeout, length mismatch)."""


class ProtocolError(TransportError):
    """Ranks issued mismatched collective calls (sequence tag disagreement)."""


class LineSearchError(RuntimeError):
    """No step satisfied the sufficient-decrease rule within the backtrack budget."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OracleError(RuntimeError):
    """The dense reference solver failed to certify optimality within budget."""
