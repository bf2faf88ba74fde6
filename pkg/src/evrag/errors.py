"""Exception types shared across the engine."""


class EvragError(Exception):
    """Base class for all engine errors."""


# --- ingest / captions ---

class ExtractionFailed(EvragError):
    """All applicable extraction tiers failed for a document."""


class UnsupportedFormat(EvragError):
    pass


class NoTracks(EvragError):
    """Transcript selection got an empty track list."""


class MalformedCaptionFile(EvragError):
    pass


# --- embedding / vector math ---

class EmptyText(EvragError):
    pass


class DimensionMismatch(EvragError):
    pass


class ZeroVector(EvragError):
    pass


class ProviderUnavailable(EvragError):
    """A remote provider (embeddings or LLM) failed after retries."""


# --- vector index ---

class DuplicateId(EvragError):
    pass


class BadK(EvragError):
    pass


class CorruptFile(EvragError):
    """Index or vector file failed magic/truncation/checksum validation."""


class VersionMismatch(EvragError):
    pass


class IndexUnavailable(EvragError):
    pass


# --- literature client ---

class TransportError(EvragError):
    pass


class RateLimited(TransportError):
    """Server-side back-pressure that persisted through retries."""


class ParseError(EvragError):
    pass


# --- tool server ---

class UnknownTool(EvragError):
    pass


class ArgValidation(EvragError):
    pass


# --- orchestration ---

class MarkerOutOfRange(EvragError):
    pass


# --- evaluation kit ---

class EmptyGroup(EvragError):
    pass


class EmptyRatings(EvragError):
    pass


class LengthMismatch(EvragError):
    pass


class UnmappedQuestion(EvragError):
    pass


# --- sessions ---

class NotFound(EvragError):
    pass


class CorruptSession(EvragError):
    pass
