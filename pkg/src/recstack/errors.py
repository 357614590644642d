"""Exception hierarchy shared across the pipeline.

Every error carries a stable ``code`` string; the HTTP layers map codes to
status codes and the CLI prints them verbatim, so tests can assert on them.
"""

from __future__ import annotations


class RecstackError(Exception):
    """Base class; ``code`` is a stable machine-readable identifier."""

    code = "ERROR"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def __str__(self) -> str:
        base = super().__str__()
        if self.details:
            extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.details.items()))
            return f"{base} ({extra})"
        return base


# --- ingest -----------------------------------------------------------------

class MalformedPayload(RecstackError):
    code = "MALFORMED_PAYLOAD"


class StoreUnavailable(RecstackError):
    code = "STORE_UNAVAILABLE"


# --- rawstore ---------------------------------------------------------------

class StoreFull(RecstackError):
    code = "STORE_FULL"


class CorruptSegment(RecstackError):
    code = "CORRUPT_SEGMENT"


# --- transform --------------------------------------------------------------

class DagCycle(RecstackError):
    code = "CYCLE"


class UnknownInput(RecstackError):
    code = "UNKNOWN_INPUT"


class StaleInput(RecstackError):
    code = "STALE_INPUT"


# --- quality ----------------------------------------------------------------

class UnknownTable(RecstackError):
    code = "UNKNOWN_TABLE"


class UnknownColumn(RecstackError):
    code = "UNKNOWN_COLUMN"


# --- recsys -----------------------------------------------------------------

class EmptyTrain(RecstackError):
    code = "EMPTY_TRAIN"


class EmptyTest(RecstackError):
    code = "EMPTY_TEST"


class EmptyDataset(RecstackError):
    code = "EMPTY_DATASET"


class EmptyModel(RecstackError):
    code = "EMPTY_MODEL"


class PackageBlocked(RecstackError):
    code = "PACKAGE_BLOCKED"


# --- serving ----------------------------------------------------------------

class UnknownVersion(RecstackError):
    code = "UNKNOWN_VERSION"


class CorruptArtifact(RecstackError):
    code = "CORRUPT_ARTIFACT"


class ChecklistFail(RecstackError):
    code = "CHECKLIST_FAIL"


class NothingStaged(RecstackError):
    code = "NOTHING_STAGED"


class NoModel(RecstackError):
    code = "NO_MODEL"


class BadRequest(RecstackError):
    code = "BAD_REQUEST"


# --- orchestrator -----------------------------------------------------------

class InvalidSpec(RecstackError):
    code = "INVALID_SPEC"


class UnknownFlow(RecstackError):
    code = "UNKNOWN_FLOW"


class UnknownRun(RecstackError):
    code = "UNKNOWN_RUN"


class RunNotTerminal(RecstackError):
    code = "RUN_NOT_TERMINAL"


class RunNotFailed(RecstackError):
    code = "RUN_NOT_FAILED"


class RunNotActive(RecstackError):
    code = "RUN_NOT_ACTIVE"


class GateBlocked(RecstackError):
    code = "GATE_BLOCKED"


class TaskCancelled(Exception):
    """Control flow, not an error code: a task observed its cancel flag."""


# --- datagen ----------------------------------------------------------------

class InvalidModel(RecstackError):
    code = "INVALID_MODEL"
