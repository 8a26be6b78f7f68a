"""Threshold-bounded packing of variable-length multimodal samples.

Samples are concatenated into fixed-budget sequences under an image threshold
``t_img`` and a token threshold ``t_tok``.  Incoming samples that exceed a
threshold are first truncated into threshold-exact parts (images are atomic
and never split).  In-progress sequences live in a buffer list kept sorted in
descending (n_images, n_tokens) order; a new sample merges into the first
buffer it fits, which under that ordering maximizes the combined image and
token counts lexicographically.  A buffer is finalized the moment it exactly
reaches a threshold or its sub-sample count hits the limit, and padded to the
token threshold on emission.

Tokens of distinct sub-samples must never attend to each other; every emitted
sequence carries a per-token segment map (pad tokens get segment ``-1``) and
position indices that restart at zero on each segment boundary.

``PackerState`` is single-writer: callers must serialize ``push_sample`` and
``flush``.  For parallel runs, shard the corpus, pack each shard with its own
state and concatenate shard outputs in shard order; everything else here is
pure.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import AtomTooLarge


class AtomKind(Enum):
    TEXT = "text"
    IMAGE = "image"


class Role(Enum):
    """Which part of the conversation a token span belongs to, for loss masking."""

    CONTEXT = "context"
    QUESTION = "question"
    ANSWER = "answer"


ROLE_CODES = {Role.CONTEXT: 0, Role.QUESTION: 1, Role.ANSWER: 2}
PAD_ROLE_CODE = 3
PAD_SEGMENT_ID = -1


@dataclass(frozen=True)
class Atom:
    """An indivisible payload unit: a text-token run or a single image."""

    kind: AtomKind
    token_length: int
    role: Role
    source_sample_id: str
    content: str | None = None

    def __post_init__(self):
        if self.token_length < 0:
            raise ValueError("atom token_length must be >= 0")
        if self.kind is AtomKind.IMAGE and self.token_length < 1:
            raise ValueError("image atoms carry at least one token")


@dataclass(frozen=True)
class Sample:
    """A measured sample: the unit of packing.

    Token totals are derived from the atom list at construction and always
    satisfy ``n_tokens == n_text_tokens + n_image_tokens``.
    """

    id: str
    atoms: tuple[Atom, ...]
    n_tokens: int = field(init=False)
    n_text_tokens: int = field(init=False)
    n_image_tokens: int = field(init=False)
    n_images: int = field(init=False)

    def __post_init__(self):
        text_tokens = 0
        image_tokens = 0
        images = 0
        for atom in self.atoms:
            if atom.kind is AtomKind.IMAGE:
                image_tokens += atom.token_length
                images += 1
            else:
                text_tokens += atom.token_length
        object.__setattr__(self, "n_text_tokens", text_tokens)
        object.__setattr__(self, "n_image_tokens", image_tokens)
        object.__setattr__(self, "n_images", images)
        object.__setattr__(self, "n_tokens", text_tokens + image_tokens)


@dataclass(frozen=True)
class PackerConfig:
    """Packing thresholds and limits.

    ``match_policy`` selects how a buffer is searched for an incoming sample:
    ``"first_fit"`` scans the full priority order, ``"front_only"`` tries just
    the front buffer.
    """

    t_img: int = 48
    t_tok: int = 32768
    max_subsamples: int = 64
    buffer_cap: int = 512
    pad_token_length_unit: int = 1
    match_policy: str = "first_fit"

    def __post_init__(self):
        for name in ("t_img", "t_tok", "max_subsamples", "buffer_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pad_token_length_unit != 1:
            raise ValueError("pad_token_length_unit is fixed at 1")
        if self.match_policy not in ("first_fit", "front_only"):
            raise ValueError(f"unknown match_policy {self.match_policy!r}")


@dataclass(frozen=True)
class SubSample:
    """One original sample's span inside a packed sequence."""

    source_sample_id: str
    atoms: tuple[Atom, ...]

    @property
    def n_tokens(self) -> int:
        return sum(a.token_length for a in self.atoms)


@dataclass(frozen=True)
class PackedSample:
    """A finalized packed sequence: the unit of training output.

    ``segment_ids``, ``positions`` and ``role_labels`` are derived on demand;
    the physical length is always ``n_tokens + pad_tokens``.
    """

    subsamples: tuple[SubSample, ...]
    n_tokens: int
    n_images: int
    pad_tokens: int

    @property
    def physical_length(self) -> int:
        return self.n_tokens + self.pad_tokens

    @property
    def segment_ids(self) -> np.ndarray:
        return attention_segments(self)[0]

    @property
    def positions(self) -> np.ndarray:
        """Position indices restarting at 0 at every segment boundary (pads too)."""
        pos = np.empty(self.physical_length, dtype=np.int32)
        offset = 0
        for sub in self.subsamples:
            n = sub.n_tokens
            pos[offset : offset + n] = np.arange(n, dtype=np.int32)
            offset += n
        pos[offset:] = np.arange(self.pad_tokens, dtype=np.int32)
        return pos

    @property
    def role_labels(self) -> np.ndarray:
        """Per-token role codes (context=0, question=1, answer=2, pad=3)."""
        labels = np.full(self.physical_length, PAD_ROLE_CODE, dtype=np.uint8)
        offset = 0
        for sub in self.subsamples:
            for atom in sub.atoms:
                labels[offset : offset + atom.token_length] = ROLE_CODES[atom.role]
                offset += atom.token_length
        return labels

    def iter_atoms(self) -> Iterable[Atom]:
        for sub in self.subsamples:
            yield from sub.atoms


class _Buffer:
    """An in-progress packed sequence awaiting more sub-samples."""

    __slots__ = ("subsamples", "n_tokens", "n_images", "seq")

    def __init__(self, seq: int):
        self.subsamples: list[SubSample] = []
        self.n_tokens = 0
        self.n_images = 0
        self.seq = seq

    def key(self) -> tuple[int, int, int]:
        # Ascending sort on this key yields descending (n_images, n_tokens);
        # seq breaks ties deterministically (oldest insertion first).
        return (-self.n_images, -self.n_tokens, self.seq)

    def add(self, sample: Sample) -> None:
        self.subsamples.append(SubSample(sample.id, sample.atoms))
        self.n_tokens += sample.n_tokens
        self.n_images += sample.n_images

    def fits(self, sample: Sample, cfg: PackerConfig) -> bool:
        return (
            self.n_images + sample.n_images <= cfg.t_img
            and self.n_tokens + sample.n_tokens <= cfg.t_tok
            and len(self.subsamples) < cfg.max_subsamples
        )

    def at_capacity(self, cfg: PackerConfig) -> bool:
        return (
            self.n_images == cfg.t_img
            or self.n_tokens == cfg.t_tok
            or len(self.subsamples) >= cfg.max_subsamples
        )


class PackerState:
    """Mutable packing state: the priority-ordered buffer list plus counters.

    The buffer list is kept sorted after every mutation; insertion position is
    found by binary search on the (descending images, descending tokens) key.
    """

    def __init__(self):
        self._buffers: list[_Buffer] = []
        self._keys: list[tuple[int, int, int]] = []
        self._next_seq = 0
        self.samples_in = 0
        self.emitted_sequences = 0
        self.truncated_samples = 0
        self.flushed_buffers = 0

    def __len__(self) -> int:
        return len(self._buffers)

    @property
    def buffers(self) -> tuple[_Buffer, ...]:
        """Read-only view, front (fullest) first."""
        return tuple(self._buffers)

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def _insert(self, buf: _Buffer) -> None:
        key = buf.key()
        pos = bisect.bisect_left(self._keys, key)
        self._keys.insert(pos, key)
        self._buffers.insert(pos, buf)

    def _pop(self, index: int) -> _Buffer:
        del self._keys[index]
        return self._buffers.pop(index)


def check_sample(s: Sample, cfg: PackerConfig) -> tuple[list[Sample], Optional[Sample]]:
    """Split an oversize sample into threshold-exact parts plus a remainder.

    A sample within both thresholds passes through untouched (``[], s``).
    Otherwise the atom list is scanned front to back, cutting the moment the
    running part holds exactly ``t_tok`` tokens or exactly ``t_img`` images,
    or just before an atom that would overflow ``t_tok`` (such a part may sit
    below both thresholds).  All parts but the last are returned for immediate
    emission; the last is the remainder handed to buffering.

    Raises:
        AtomTooLarge: a single indivisible atom exceeds ``t_tok``.
    """
    for atom in s.atoms:
        if atom.token_length > cfg.t_tok:
            raise AtomTooLarge(s.id, atom.token_length, cfg.t_tok)
    if s.n_tokens <= cfg.t_tok and s.n_images <= cfg.t_img:
        return [], s

    parts: list[list[Atom]] = []
    current: list[Atom] = []
    tokens = 0
    images = 0
    for atom in s.atoms:
        if tokens + atom.token_length > cfg.t_tok:
            parts.append(current)
            current, tokens, images = [], 0, 0
        current.append(atom)
        tokens += atom.token_length
        if atom.kind is AtomKind.IMAGE:
            images += 1
        if tokens == cfg.t_tok or images == cfg.t_img:
            parts.append(current)
            current, tokens, images = [], 0, 0
    if current:
        parts.append(current)

    samples = [Sample(f"{s.id}#p{i}", tuple(atoms)) for i, atoms in enumerate(parts)]
    remainder = samples.pop()
    return samples, remainder


def find_buffer(s: Sample, state: PackerState, cfg: PackerConfig) -> Optional[int]:
    """Index of the best buffer the sample fits into, or None.

    Buffers are scanned front to back; since the list is ordered descending by
    (n_images, n_tokens), the first fit maximizes the combined totals
    lexicographically.  Under ``match_policy="front_only"`` only the front
    buffer is tried.
    """
    buffers = state._buffers
    limit = 1 if cfg.match_policy == "front_only" else len(buffers)
    for i in range(min(limit, len(buffers))):
        if buffers[i].fits(s, cfg):
            return i
    return None


def _finalize(buf: _Buffer, cfg: PackerConfig) -> PackedSample:
    return PackedSample(
        subsamples=tuple(buf.subsamples),
        n_tokens=buf.n_tokens,
        n_images=buf.n_images,
        pad_tokens=cfg.t_tok - buf.n_tokens,
    )


def _single(sample: Sample, state: PackerState, cfg: PackerConfig) -> PackedSample:
    buf = _Buffer(state._take_seq())
    buf.add(sample)
    return _finalize(buf, cfg)


def push_sample(state: PackerState, s: Sample, cfg: PackerConfig) -> list[PackedSample]:
    """Feed one sample through truncation, buffer search and maintenance.

    Returns every packed sequence this push finalized (possibly none), each
    padded to exactly ``t_tok`` physical tokens.  When the buffer list grows
    past ``buffer_cap`` the front (fullest) buffer is evicted and emitted.
    """
    state.samples_in += 1
    pre_parts, remainder = check_sample(s, cfg)
    out = [_single(part, state, cfg) for part in pre_parts]
    if pre_parts:
        state.truncated_samples += 1
    if remainder is None:
        state.emitted_sequences += len(out)
        return out

    index = find_buffer(remainder, state, cfg)
    if index is None:
        buf = _Buffer(state._take_seq())
    else:
        buf = state._pop(index)
        buf.seq = state._take_seq()
    buf.add(remainder)

    if buf.at_capacity(cfg):
        out.append(_finalize(buf, cfg))
    else:
        state._insert(buf)
        if len(state._buffers) > cfg.buffer_cap:
            out.append(_finalize(state._pop(0), cfg))

    state.emitted_sequences += len(out)
    return out


def flush(state: PackerState, cfg: PackerConfig) -> list[PackedSample]:
    """Finalize every residual buffer in priority order and empty the state."""
    out = []
    while state._buffers:
        out.append(_finalize(state._pop(0), cfg))
        state.flushed_buffers += 1
    state.emitted_sequences += len(out)
    return out


def pack_stream(
    samples: Iterable[Sample], cfg: PackerConfig, state: PackerState | None = None
) -> Iterable[PackedSample]:
    """Convenience driver: push every sample, then flush."""
    if state is None:
        state = PackerState()
    for s in samples:
        yield from push_sample(state, s, cfg)
    yield from flush(state, cfg)


def attention_segments(p: PackedSample) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Per-token segment ids plus (start, end) boundaries per sub-sample.

    Sub-samples get ids ``0..k-1``; pad tokens get the sentinel ``-1``.  The
    implied attention rule is block-diagonal and causal: token ``i`` may attend
    to ``j`` iff ``segment(i) == segment(j) != -1`` and ``j <= i``.
    """
    ids = np.full(p.physical_length, PAD_SEGMENT_ID, dtype=np.int32)
    boundaries = []
    offset = 0
    for k, sub in enumerate(p.subsamples):
        n = sub.n_tokens
        ids[offset : offset + n] = k
        boundaries.append((offset, offset + n))
        offset += n
    return ids, boundaries
