"""Error types shared across the engine.

Every error carries a stable ``code`` string so the CLI and the HTTP layer
can surface machine-readable failures without matching on message text.
"""

from __future__ import annotations


class EngineError(Exception):
    code = "EngineError"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


class DuplicateId(EngineError):
    code = "DuplicateId"


class FactConflict(EngineError):
    code = "FactConflict"


class FixedLayerViolation(EngineError):
    code = "FixedLayerViolation"


class FixedConflict(EngineError):
    code = "FixedConflict"


class InvalidKB(EngineError):
    code = "InvalidKB"


class NoDecision(EngineError):
    """No positive literal was derived for the decision query.

    Covers the ambiguity-blocked case; the blocking pairs travel in
    ``details["ambiguities"]``.
    """

    code = "NoDecision"


class EmptyTrace(EngineError):
    code = "EmptyTrace"


class NoCandidateRules(EngineError):
    code = "NoCandidateRules"


class MissingMemory(EngineError):
    code = "MissingMemory"


class MissingExpected(EngineError):
    code = "MissingExpected"


class SeqGap(EngineError):
    code = "SeqGap"


class KindMismatch(EngineError):
    code = "KindMismatch"


class UnknownItem(EngineError):
    code = "UnknownItem"


class RetractUnknown(EngineError):
    code = "RetractUnknown"


class IoFailure(EngineError):
    code = "IoFailure"


class CorruptRecord(EngineError):
    code = "CorruptRecord"

    def __init__(self, message: str, line: int):
        super().__init__(message, line=line)
        self.line = line
