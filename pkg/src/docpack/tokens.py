"""Deterministic token accounting for text and images.

Text is counted by a reference rule that needs no vocabulary asset: each
maximal run of non-whitespace characters contributes ``ceil(len/6)`` tokens.
Any real tokenizer can be plugged in instead via an executable that reads
text on standard input and prints an integer count.

Images are costed through the dynamic high-resolution tile model: the image's
aspect ratio selects a tile grid (bounded by ``max_tiles``), a thumbnail tile
is added whenever the grid has more than one tile, and each tile costs
``tokens_per_tile`` tokens.
"""

from __future__ import annotations

import re
import shlex
import subprocess
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidEncoding
from .ingest import ImageRef, InterleavedDoc, SegmentKind
from .packer import Atom, AtomKind, Role, Sample
from .qa import ANSWER_GLUE, CONTEXT_PREFIX, QUESTION_GLUE, TURN_JOIN, Conversation, Task

_RUN = re.compile(r"\S+")
_CHARS_PER_TOKEN = 6


class TokenizerKind(Enum):
    REFERENCE = "reference"
    EXTERNAL = "external"


@dataclass(frozen=True)
class TokenizerSpec:
    """Which tokenizer to count with.

    The reference kind needs no resources.  The external kind names an
    executable (``external_vocab_uri``, parsed as a command line) that reads
    UTF-8 text on stdin and writes the token count to stdout.
    """

    kind: TokenizerKind = TokenizerKind.REFERENCE
    external_vocab_uri: str | None = None

    def __post_init__(self):
        if self.kind is TokenizerKind.EXTERNAL and not self.external_vocab_uri:
            raise ValueError("external tokenizer needs external_vocab_uri")


REFERENCE_TOKENIZER = TokenizerSpec()


@dataclass(frozen=True)
class TileConfig:
    """Tile model parameters (resolution and cap per the training defaults)."""

    tile_resolution_px: int = 448
    max_tiles: int = 24
    tokens_per_tile: int = 256
    use_thumbnail: bool = True

    def __post_init__(self):
        for name in ("tile_resolution_px", "max_tiles", "tokens_per_tile"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


DEFAULT_TILES = TileConfig()


def _utf8(text: str | bytes) -> str:
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(str(exc)) from exc
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InvalidEncoding(str(exc)) from exc
    return text


def count_text_tokens(text: str | bytes, spec: TokenizerSpec = REFERENCE_TOKENIZER) -> int:
    """Token count for ``text`` under ``spec``; deterministic, 0 for empty input.

    Raises:
        InvalidEncoding: the input is not valid UTF-8.
    """
    decoded = _utf8(text)
    if spec.kind is TokenizerKind.EXTERNAL:
        result = subprocess.run(
            shlex.split(spec.external_vocab_uri),
            input=decoded.encode("utf-8"),
            capture_output=True,
            check=True,
        )
        return int(result.stdout.strip())
    return sum(
        (len(run) + _CHARS_PER_TOKEN - 1) // _CHARS_PER_TOKEN
        for run in _RUN.findall(decoded)
    )


def _grids(max_tiles: int) -> list[tuple[int, int]]:
    grids = [
        (rows, cols)
        for rows in range(1, max_tiles + 1)
        for cols in range(1, max_tiles // rows + 1)
    ]
    grids.sort(key=lambda rc: (rc[0] * rc[1], rc[0]))
    return grids


def compute_tiles(width_px: int, height_px: int, cfg: TileConfig = DEFAULT_TILES) -> int:
    """Number of tiles for an image of the given dimensions.

    Scans every grid with at most ``max_tiles`` cells for the aspect ratio
    closest to the image's.  On equal closeness a larger grid wins only when
    the image area justifies it (area above half the grid's pixel capacity);
    among equal-sized candidates the fewer-rows grid is kept.  A thumbnail
    tile is added whenever the chosen grid has more than one cell.
    """
    if width_px < 1 or height_px < 1:
        raise ValueError("image dimensions must be >= 1")
    aspect = width_px / height_px
    area = width_px * height_px
    half_tile = 0.5 * cfg.tile_resolution_px * cfg.tile_resolution_px
    best_rows, best_cols = 1, 1
    best_diff = abs(1.0 - aspect)
    for rows, cols in _grids(cfg.max_tiles):
        cells = rows * cols
        diff = abs(cols / rows - aspect)
        if diff < best_diff:
            best_rows, best_cols, best_diff = rows, cols, diff
        elif diff == best_diff and cells > best_rows * best_cols and area > half_tile * cells:
            best_rows, best_cols = rows, cols
    grid = best_rows * best_cols
    if cfg.use_thumbnail and grid > 1:
        return grid + 1
    return grid


def image_tokens(img: ImageRef, cfg: TileConfig = DEFAULT_TILES) -> int:
    """Token cost of one image: tile count times tokens per tile."""
    return compute_tiles(img.width_px, img.height_px, cfg) * cfg.tokens_per_tile


def measure_sample(
    conv: Conversation,
    spec: TokenizerSpec = REFERENCE_TOKENIZER,
    cfg: TileConfig = DEFAULT_TILES,
    sample_id: str | None = None,
) -> Sample:
    """Measure a conversation into a packable :class:`Sample`.

    The sample's atoms mirror the rendered conversation: the context prefix
    and every context segment (role ``context``), then per turn the question
    span and the answer span.  Text atoms are counted per span with the
    configured tokenizer (image markers never enter text spans); each image
    atom costs its tile-model token count.
    """
    sid = sample_id if sample_id is not None else f"{conv.doc_id}:{conv.turns[0].task.value}"

    def text_atom(text: str, role: Role) -> Atom:
        return Atom(AtomKind.TEXT, count_text_tokens(text, spec), role, sid, content=text)

    def image_atom(ref: ImageRef) -> Atom:
        return Atom(AtomKind.IMAGE, image_tokens(ref, cfg), Role.CONTEXT, sid, content=ref.uri)

    first = conv.turns[0]
    if first.task is Task.NTP and not conv.multi_turn:
        return Sample(sid, (text_atom(first.answer, Role.ANSWER),))

    atoms: list[Atom] = [text_atom(CONTEXT_PREFIX, Role.CONTEXT)]
    if isinstance(conv.context, InterleavedDoc):
        for seg in conv.context.segments:
            if seg.kind is SegmentKind.TEXT:
                atoms.append(text_atom(seg.text, Role.CONTEXT))
            else:
                atoms.append(image_atom(seg.image))
    else:
        for page in conv.context.pages:
            atoms.append(image_atom(page))
    atoms.append(text_atom(f"{QUESTION_GLUE}{first.question}", Role.QUESTION))
    atoms.append(text_atom(f"{ANSWER_GLUE}{first.answer}", Role.ANSWER))
    for turn in conv.turns[1:]:
        atoms.append(text_atom(f"{TURN_JOIN}{turn.question}", Role.QUESTION))
        atoms.append(text_atom(f"{ANSWER_GLUE}{turn.answer}", Role.ANSWER))
    return Sample(sid, tuple(atoms))
