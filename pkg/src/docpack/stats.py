"""Corpus statistics and packing-efficiency reporting.

``corpus_stats`` folds a conversation stream into dataset-level counters
(question/image/conversation totals, per-conversation token averages).
``packing_report`` quantifies how much padding the packer saved against the
naive baseline that pads every sample individually to the token threshold,
after identical truncation.  Both folds are associative: shard-level results
merge into corpus-level ones exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .errors import StreamMismatch
from .packer import Atom, PackedSample, PackerConfig, Sample, check_sample
from .qa import Conversation


@dataclass(frozen=True)
class CorpusStats:
    """Dataset-level counters; averages are per conversation."""

    total_questions: int = 0
    total_images: int = 0
    total_conversations: int = 0
    multi_turn_conversations: int = 0
    single_turn_conversations: int = 0
    total_text_tokens: int = 0
    total_image_tokens: int = 0

    @property
    def avg_text_tokens(self) -> float:
        return self.total_text_tokens / self.total_conversations if self.total_conversations else 0.0

    @property
    def avg_image_tokens(self) -> float:
        return self.total_image_tokens / self.total_conversations if self.total_conversations else 0.0


def corpus_stats(
    convs: Iterable[Conversation], measured: Iterable[Sample]
) -> CorpusStats:
    """Fold aligned conversation/sample streams into :class:`CorpusStats`.

    Raises:
        StreamMismatch: the streams are not the same length.
    """
    questions = images = conversations = multi = 0
    text_tokens = image_tokens = 0
    convs_it = iter(convs)
    measured_it = iter(measured)
    sentinel = object()
    while True:
        conv = next(convs_it, sentinel)
        sample = next(measured_it, sentinel)
        if conv is sentinel and sample is sentinel:
            break
        if conv is sentinel or sample is sentinel:
            raise StreamMismatch("conversation and sample streams have different lengths")
        conversations += 1
        questions += len(conv.turns)
        if conv.multi_turn:
            multi += 1
        images += sample.n_images
        text_tokens += sample.n_text_tokens
        image_tokens += sample.n_image_tokens
    return CorpusStats(
        total_questions=questions,
        total_images=images,
        total_conversations=conversations,
        multi_turn_conversations=multi,
        single_turn_conversations=conversations - multi,
        total_text_tokens=text_tokens,
        total_image_tokens=image_tokens,
    )


def merge_corpus_stats(parts: Sequence[CorpusStats]) -> CorpusStats:
    """Field-wise sum over shard results; averages recompute from the sums."""
    return CorpusStats(
        total_questions=sum(p.total_questions for p in parts),
        total_images=sum(p.total_images for p in parts),
        total_conversations=sum(p.total_conversations for p in parts),
        multi_turn_conversations=sum(p.multi_turn_conversations for p in parts),
        single_turn_conversations=sum(p.single_turn_conversations for p in parts),
        total_text_tokens=sum(p.total_text_tokens for p in parts),
        total_image_tokens=sum(p.total_image_tokens for p in parts),
    )


@dataclass(frozen=True)
class PackingReport:
    """Padding accounting for a packed stream versus the naive baseline."""

    packed_sequences: int
    total_payload_tokens: int
    total_pad_tokens: int
    utilization: float
    naive_pad_tokens: int
    waste_reduction_ratio: float
    truncated_samples: int


def _waste_reduction_ratio(naive_pad: int, pad: int) -> float:
    # No waste under either policy means nothing was reduced: ratio 1.
    if naive_pad == 0 and pad == 0:
        return 1.0
    return naive_pad / max(pad, 1)


def packing_report(packed: Iterable[PackedSample], cfg: PackerConfig) -> PackingReport:
    """Summarize a packed stream produced under ``cfg``.

    The naive baseline is reconstructed from the packed output itself: atoms
    are regrouped by their source sample (packing preserves their order, and
    atoms keep the pre-truncation sample id), re-run through the same
    truncation as the packer, and each resulting part is padded individually
    to ``t_tok``.
    """
    sequences = payload = pad = 0
    originals: dict[str, list[Atom]] = {}
    for p in packed:
        sequences += 1
        payload += p.n_tokens
        pad += p.pad_tokens
        for atom in p.iter_atoms():
            originals.setdefault(atom.source_sample_id, []).append(atom)

    naive_pad = 0
    truncated = 0
    for sid, atoms in originals.items():
        parts, remainder = check_sample(Sample(sid, tuple(atoms)), cfg)
        if parts:
            truncated += 1
        for part in [*parts, remainder]:
            naive_pad += cfg.t_tok - part.n_tokens

    physical = payload + pad
    return PackingReport(
        packed_sequences=sequences,
        total_payload_tokens=payload,
        total_pad_tokens=pad,
        utilization=payload / physical if physical else 1.0,
        naive_pad_tokens=naive_pad,
        waste_reduction_ratio=_waste_reduction_ratio(naive_pad, pad),
        truncated_samples=truncated,
    )


# --- rendering ---------------------------------------------------------------

_STATS_ROWS = (
    ("Total Questions", "total_questions"),
    ("Total Images", "total_images"),
    ("Total Conversations", "total_conversations"),
    ("Multi-Turn Questions", "multi_turn_conversations"),
    ("Single-Turn Questions", "single_turn_conversations"),
    ("Average Text Tokens", "avg_text_tokens"),
    ("Average Image Tokens", "avg_image_tokens"),
)

_REPORT_ROWS = (
    ("Packed Sequences", "packed_sequences"),
    ("Payload Tokens", "total_payload_tokens"),
    ("Pad Tokens", "total_pad_tokens"),
    ("Utilization", "utilization"),
    ("Naive Pad Tokens", "naive_pad_tokens"),
    ("Waste Reduction Ratio", "waste_reduction_ratio"),
    ("Truncated Samples", "truncated_samples"),
)


def _table(rows: Iterable[tuple[str, object]]) -> str:
    rows = list(rows)
    width = max(len(label) for label, _ in rows)
    lines = [f"{'Statistics'.ljust(width)}  Number", "-" * (width + 8)]
    for label, value in rows:
        if isinstance(value, float):
            value = f"{value:.4f}"
        lines.append(f"{label.ljust(width)}  {value}")
    return "\n".join(lines)


def corpus_stats_to_dict(stats: CorpusStats) -> dict:
    out = asdict(stats)
    out["avg_text_tokens"] = stats.avg_text_tokens
    out["avg_image_tokens"] = stats.avg_image_tokens
    return out


def corpus_stats_table(stats: CorpusStats) -> str:
    """Aligned plain-text table mirroring the dataset-statistics row labels."""
    return _table((label, getattr(stats, attr)) for label, attr in _STATS_ROWS)


def packing_report_to_dict(report: PackingReport) -> dict:
    return asdict(report)


def packing_report_table(report: PackingReport) -> str:
    return _table((label, getattr(report, attr)) for label, attr in _REPORT_ROWS)


def to_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"
