class QlintError(Exception):
    """Base class for operational errors raised by qlint."""


class ProviderError(QlintError):
    def __init__(self, message: str, kind: str = "http", status: int | None = None):
        super().__init__(message)
        self.kind = kind
        self.status = status


class DimensionMismatch(QlintError):
    pass


class EmbedderError(QlintError):
    def __init__(self, message: str, entry_id: str | None = None):
        super().__init__(message)
        self.entry_id = entry_id


class MalformedResponse(QlintError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class ContextOverflow(QlintError):
    pass


class EmptyIndex(QlintError):
    pass


class OutOfRange(QlintError):
    pass


class NotInjectable(QlintError):
    pass
