"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class BotCorpusError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BotCorpusError):
    def __init__(self, message: str, key_path: str | None = None) -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class StageFailed(BotCorpusError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


# --- transport -------------------------------------------------------------

class TransportError(BotCorpusError):
    """Network failure or missing replay fixture."""


class FixtureMissing(TransportError):
    def __init__(self, key: str, method: str, url: str) -> None:
        self.key = key
        super().__init__(f"no recorded response for {method} {url} (key {key})")


# --- harvest ---------------------------------------------------------------

class RateLimited(TransportError):
    pass


class AuthMissing(BotCorpusError):
    pass


class NotFound(BotCorpusError):
    pass


class FetchFailed(BotCorpusError):
    pass


class ChecksumMismatch(FetchFailed):
    pass


# --- domain ----------------------------------------------------------------

class SemanticError(BotCorpusError):
    """A domain file parses as YAML but its content is not a legal Rasa domain."""


# --- language --------------------------------------------------------------

class NoTrainingData(BotCorpusError):
    pass


class DetectorUnavailable(BotCorpusError):
    pass


class UnknownUnitId(BotCorpusError):
    def __init__(self, unit_id: str, row: int) -> None:
        self.unit_id = unit_id
        self.row = row
        super().__init__(f"row {row}: unknown unit id {unit_id!r}")


class MalformedRow(BotCorpusError):
    def __init__(self, row: int, reason: str) -> None:
        self.row = row
        super().__init__(f"row {row}: {reason}")


# --- enrich ----------------------------------------------------------------

class LlmUnavailable(BotCorpusError):
    pass


class UnparseableResponse(BotCorpusError):
    pass


class EmptyResponse(BotCorpusError):
    pass


# --- report ----------------------------------------------------------------

class EmptyManifest(BotCorpusError):
    pass
