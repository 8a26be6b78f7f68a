"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class DocpackError(Exception):
    """Base class for all toolkit errors."""


# --- ingestion ---


class MalformedRecord(DocpackError):
    """The interchange record is not syntactically valid JSON."""


class SchemaViolation(DocpackError):
    """A required field is missing or has the wrong shape."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = f"schema violation at {field!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DanglingImageRef(DocpackError):
    """A section references a figure/table id absent from the record."""

    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"section references unknown image id {image_id!r}")


class EmptyManifest(DocpackError):
    """A multi-image rendering was requested with no page entries."""


# --- QA construction ---


class MissingField(DocpackError):
    """A requested task's prerequisite field is absent from the document.

    Callers driving many tasks over many documents may treat this as a skip.
    """

    def __init__(self, task: str, field: str):
        self.task = task
        self.field = field
        super().__init__(f"task {task!r} needs missing field {field!r}")


class NoReviews(DocpackError):
    """Review/reply construction was requested on a document with no review threads."""


class EmptyQAList(DocpackError):
    """An externally generated QA attachment contained no pairs."""


# --- token accounting ---


class InvalidEncoding(DocpackError):
    """Input text is not valid UTF-8."""


# --- packing ---


class AtomTooLarge(DocpackError):
    """A single indivisible atom exceeds the token threshold and cannot be packed."""

    def __init__(self, sample_id: str, token_length: int, t_tok: int):
        self.sample_id = sample_id
        self.token_length = token_length
        self.t_tok = t_tok
        super().__init__(
            f"sample {sample_id!r} has an atom of {token_length} tokens, "
            f"above the token threshold {t_tok}"
        )


# --- statistics ---


class StreamMismatch(DocpackError):
    """Paired conversation/sample streams were not aligned one-to-one."""


# --- configuration ---


class ConfigError(DocpackError):
    """The pipeline configuration is invalid."""
