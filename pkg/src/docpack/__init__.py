"""docpack: multimodal corpus construction and fixed-budget sequence packing.

The pipeline runs ingest -> build-qa -> measure -> pack -> stats/bench:
documents are parsed from a JSON-lines interchange format, rendered into
interleaved or paginated contexts, turned into proxy-task conversations,
measured in text and image tokens, and packed into threshold-bounded training
sequences with per-token segment maps for attention isolation.
"""

from .errors import (
    AtomTooLarge,
    ConfigError,
    DanglingImageRef,
    DocpackError,
    EmptyManifest,
    EmptyQAList,
    InvalidEncoding,
    MalformedRecord,
    MissingField,
    NoReviews,
    SchemaViolation,
    StreamMismatch,
)
from .ingest import (
    Document,
    ImageRef,
    InterleavedDoc,
    MediaItem,
    MultiImageDoc,
    ReviewThread,
    Section,
    Segment,
    SegmentKind,
    Source,
    parse_document,
    render_context,
    serialize_document,
    to_interleaved,
    to_multi_image,
)
from .packer import (
    Atom,
    AtomKind,
    PackedSample,
    PackerConfig,
    PackerState,
    Role,
    Sample,
    SubSample,
    attention_segments,
    check_sample,
    find_buffer,
    flush,
    pack_stream,
    push_sample,
)
from .qa import (
    Conversation,
    QAPair,
    Task,
    TemplateSet,
    attach_external_qa,
    build_ntp,
    build_review_reply,
    build_structured_tasks,
    render_conversation,
)
from .stats import (
    CorpusStats,
    PackingReport,
    corpus_stats,
    merge_corpus_stats,
    packing_report,
)
from .tokens import (
    TileConfig,
    TokenizerKind,
    TokenizerSpec,
    compute_tiles,
    count_text_tokens,
    image_tokens,
    measure_sample,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AtomKind",
    "AtomTooLarge",
    "ConfigError",
    "Conversation",
    "CorpusStats",
    "DanglingImageRef",
    "DocpackError",
    "Document",
    "EmptyManifest",
    "EmptyQAList",
    "ImageRef",
    "InterleavedDoc",
    "InvalidEncoding",
    "MalformedRecord",
    "MediaItem",
    "MissingField",
    "MultiImageDoc",
    "NoReviews",
    "PackedSample",
    "PackerConfig",
    "PackerState",
    "PackingReport",
    "QAPair",
    "ReviewThread",
    "Role",
    "Sample",
    "SchemaViolation",
    "Section",
    "Segment",
    "SegmentKind",
    "Source",
    "StreamMismatch",
    "SubSample",
    "Task",
    "TemplateSet",
    "TileConfig",
    "TokenizerKind",
    "TokenizerSpec",
    "attach_external_qa",
    "attention_segments",
    "build_ntp",
    "build_review_reply",
    "build_structured_tasks",
    "check_sample",
    "compute_tiles",
    "corpus_stats",
    "count_text_tokens",
    "find_buffer",
    "flush",
    "image_tokens",
    "measure_sample",
    "merge_corpus_stats",
    "pack_stream",
    "packing_report",
    "parse_document",
    "push_sample",
    "render_context",
    "render_conversation",
    "serialize_document",
    "to_interleaved",
    "to_multi_image",
]
