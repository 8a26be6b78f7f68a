"""Structured document model and the two canonical context renderings.

Documents arrive as UTF-8 JSON-lines interchange records, one document per
line.  A record carries the document's sections (ordered text/image items),
its figure and table assets, and optionally reviews, a page manifest, title,
abstract and language.  ``parse_document`` maps a record onto an immutable
:class:`Document`; ``to_interleaved`` and ``to_multi_image`` turn a document
into the two context formats consumed downstream:

* interleaved: an ordered mix of text runs and image placeholders, rendered
  as ``<text>\\n<image>\\n<text>`` with captions following their images;
* multi-image: one image reference per page, rendered as
  ``<image>\\n<image>\\n...``.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import DanglingImageRef, EmptyManifest, MalformedRecord, SchemaViolation

IMAGE_MARKER = "<image>"
SEGMENT_JOIN = "\n"


class Source(Enum):
    """Where a document was collected from."""

    SCIHUB = "scihub"
    ARXIV = "arxiv"
    OPENREVIEW = "openreview"
    OTHER = "other"

    @classmethod
    def parse(cls, value: str) -> "Source":
        try:
            return cls(value.strip().lower())
        except ValueError:
            return cls.OTHER


class SegmentKind(Enum):
    TEXT = "text"
    IMAGE = "image"


@dataclass(frozen=True)
class ImageRef:
    """A reference to an image asset plus its pixel dimensions."""

    uri: str
    width_px: int
    height_px: int

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(
                f"image dimensions must be >= 1, got {self.width_px}x{self.height_px}"
            )


@dataclass(frozen=True)
class Segment:
    """One unit of document content: a text run or an image.

    ``media_id`` records which document asset an image segment came from, so
    captions and serialization stay unambiguous even when assets share a URI.
    """

    kind: SegmentKind
    text: str | None = None
    image: ImageRef | None = None
    media_id: str | None = None

    def __post_init__(self):
        if self.kind is SegmentKind.TEXT and (self.text is None or self.image is not None):
            raise ValueError("text segment must carry text and no image")
        if self.kind is SegmentKind.IMAGE and (self.image is None or self.text is not None):
            raise ValueError("image segment must carry an image and no text")

    @classmethod
    def of_text(cls, text: str) -> "Segment":
        return cls(kind=SegmentKind.TEXT, text=text)

    @classmethod
    def of_image(cls, image: ImageRef, media_id: str | None = None) -> "Segment":
        return cls(kind=SegmentKind.IMAGE, image=image, media_id=media_id)


@dataclass(frozen=True)
class Section:
    """A headed span of the document; the heading is structural metadata only."""

    heading: str
    body: tuple[Segment, ...]

    def __post_init__(self):
        if not self.body:
            raise ValueError(f"section {self.heading!r} has an empty body")


@dataclass(frozen=True)
class MediaItem:
    """A figure or table rendered as an image, with its caption."""

    id: str
    image: ImageRef
    caption: str = ""


@dataclass(frozen=True)
class ReviewThread:
    """A review and its optional author reply."""

    review: str
    reply: str | None = None

    def __post_init__(self):
        if not self.review:
            raise ValueError("review text must be non-empty")


@dataclass(frozen=True)
class Document:
    """A parsed document: the unit of ingestion.

    ``pages`` is an optional page-image manifest; when present it enables the
    multi-image context format without re-reading the source record.
    """

    id: str
    source: Source
    sections: tuple[Section, ...]
    figures: tuple[MediaItem, ...] = ()
    tables: tuple[MediaItem, ...] = ()
    reviews: tuple[ReviewThread, ...] = ()
    title: str | None = None
    abstract: str | None = None
    language: str = "en"
    pages: tuple[ImageRef, ...] = ()

    def media(self) -> dict[str, MediaItem]:
        """All figures and tables keyed by id."""
        return {item.id: item for item in self.figures + self.tables}


@dataclass(frozen=True)
class InterleavedDoc:
    """Document content as an ordered mix of text runs and images.

    Adjacent text segments are merged at construction, so the segment list
    never contains two text segments in a row.
    """

    segments: tuple[Segment, ...]

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.kind is SegmentKind.TEXT and b.kind is SegmentKind.TEXT:
                raise ValueError("adjacent text segments must be merged")

    @property
    def n_images(self) -> int:
        return sum(1 for s in self.segments if s.kind is SegmentKind.IMAGE)

    def text(self) -> str:
        """All text content, in order, joined by newlines (images dropped)."""
        return SEGMENT_JOIN.join(
            s.text for s in self.segments if s.kind is SegmentKind.TEXT
        )


@dataclass(frozen=True)
class MultiImageDoc:
    """Document content as one image per page, in page order."""

    pages: tuple[ImageRef, ...]

    def __post_init__(self):
        if not self.pages:
            raise EmptyManifest("multi-image document needs at least one page")

    @property
    def n_images(self) -> int:
        return len(self.pages)


# --- parsing ---------------------------------------------------------------


def _require(record: Mapping[str, Any], field: str) -> Any:
    if field not in record:
        raise SchemaViolation(field)
    return record[field]


def _parse_image_ref(raw: Mapping[str, Any], where: str) -> ImageRef:
    for key in ("uri", "width", "height"):
        if key not in raw:
            raise SchemaViolation(f"{where}.{key}")
    try:
        return ImageRef(str(raw["uri"]), int(raw["width"]), int(raw["height"]))
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(where, str(exc)) from exc


def _parse_media(raw: Any, field: str) -> tuple[MediaItem, ...]:
    if not isinstance(raw, list):
        raise SchemaViolation(field, "expected an array")
    items = []
    for i, entry in enumerate(raw):
        where = f"{field}[{i}]"
        if not isinstance(entry, Mapping):
            raise SchemaViolation(where, "expected an object")
        if "id" not in entry:
            raise SchemaViolation(f"{where}.id")
        items.append(
            MediaItem(
                id=str(entry["id"]),
                image=_parse_image_ref(entry, where),
                caption=str(entry.get("caption", "")),
            )
        )
    return tuple(items)


def _parse_sections(raw: Any, media_ids: frozenset[str], media: Mapping[str, MediaItem]) -> tuple[Section, ...]:
    if not isinstance(raw, list):
        raise SchemaViolation("sections", "expected an array")
    sections = []
    for i, entry in enumerate(raw):
        where = f"sections[{i}]"
        if not isinstance(entry, Mapping):
            raise SchemaViolation(where, "expected an object")
        if "heading" not in entry:
            raise SchemaViolation(f"{where}.heading")
        body_raw = entry.get("body")
        if not isinstance(body_raw, list) or not body_raw:
            raise SchemaViolation(f"{where}.body", "expected a non-empty array")
        body = []
        for j, item in enumerate(body_raw):
            item_where = f"{where}.body[{j}]"
            if not isinstance(item, Mapping):
                raise SchemaViolation(item_where, "expected an object")
            if "t" in item:
                body.append(Segment.of_text(str(item["t"])))
            elif "img" in item:
                ref = str(item["img"])
                if ref not in media_ids:
                    raise DanglingImageRef(ref)
                body.append(Segment.of_image(media[ref].image, media_id=ref))
            else:
                raise SchemaViolation(item_where, 'expected a "t" or "img" key')
        sections.append(Section(heading=str(entry["heading"]), body=tuple(body)))
    return tuple(sections)


def parse_document(raw: str | bytes | Mapping[str, Any]) -> Document:
    """Parse one interchange record into a :class:`Document`.

    ``raw`` may be a JSON string/bytes (one corpus line) or an already-decoded
    mapping.  Unknown fields are ignored; segment order is preserved.

    Raises:
        MalformedRecord: the input is not valid JSON or not an object.
        SchemaViolation: a required field is missing or malformed.
        DanglingImageRef: a section references an image id that is not
            declared under ``figures``/``tables``.
    """
    if isinstance(raw, (str, bytes)):
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc}") from exc
    else:
        record = raw
    if not isinstance(record, Mapping):
        raise MalformedRecord("record must be a JSON object")

    doc_id = str(_require(record, "id"))
    source = Source.parse(str(_require(record, "source")))
    figures = _parse_media(_require(record, "figures"), "figures")
    tables = _parse_media(_require(record, "tables"), "tables")
    media = {item.id: item for item in figures + tables}
    sections = _parse_sections(
        _require(record, "sections"), frozenset(media), media
    )

    reviews = []
    for i, entry in enumerate(record.get("reviews", []) or []):
        where = f"reviews[{i}]"
        if not isinstance(entry, Mapping) or not entry.get("review"):
            raise SchemaViolation(f"{where}.review", "expected a non-empty review")
        reply = entry.get("reply")
        reviews.append(ReviewThread(str(entry["review"]), None if reply is None else str(reply)))

    pages = tuple(
        _parse_image_ref(entry, f"pages[{i}]")
        for i, entry in enumerate(record.get("pages", []) or [])
    )

    title = record.get("title")
    abstract = record.get("abstract")
    return Document(
        id=doc_id,
        source=source,
        sections=sections,
        figures=figures,
        tables=tables,
        reviews=tuple(reviews),
        title=None if title is None else str(title),
        abstract=None if abstract is None else str(abstract),
        language=str(record.get("language", "en")),
        pages=pages,
    )


def document_to_record(doc: Document) -> dict[str, Any]:
    """Map a :class:`Document` back onto the interchange record shape."""

    def media_entry(item: MediaItem) -> dict[str, Any]:
        return {
            "id": item.id,
            "uri": item.image.uri,
            "width": item.image.width_px,
            "height": item.image.height_px,
            "caption": item.caption,
        }

    record: dict[str, Any] = {
        "id": doc.id,
        "source": doc.source.value,
        "sections": [
            {
                "heading": section.heading,
                "body": [
                    {"t": seg.text} if seg.kind is SegmentKind.TEXT else {"img": seg.media_id}
                    for seg in section.body
                ],
            }
            for section in doc.sections
        ],
        "figures": [media_entry(item) for item in doc.figures],
        "tables": [media_entry(item) for item in doc.tables],
    }
    if doc.title is not None:
        record["title"] = doc.title
    if doc.abstract is not None:
        record["abstract"] = doc.abstract
    if doc.reviews:
        record["reviews"] = [
            {"review": t.review} if t.reply is None else {"review": t.review, "reply": t.reply}
            for t in doc.reviews
        ]
    record["language"] = doc.language
    if doc.pages:
        record["pages"] = [
            {"uri": p.uri, "width": p.width_px, "height": p.height_px} for p in doc.pages
        ]
    return record


def serialize_document(doc: Document) -> str:
    """One corpus line for ``doc``; parses back to an equal Document."""
    return json.dumps(document_to_record(doc), ensure_ascii=False, separators=(",", ":"))


# --- context construction ---------------------------------------------------


def _merge_adjacent_text(segments: Iterable[Segment]) -> tuple[Segment, ...]:
    merged: list[Segment] = []
    for seg in segments:
        if (
            merged
            and seg.kind is SegmentKind.TEXT
            and merged[-1].kind is SegmentKind.TEXT
        ):
            merged[-1] = Segment.of_text(merged[-1].text + SEGMENT_JOIN + seg.text)
        else:
            merged.append(seg)
    return tuple(merged)


def interleave(
    doc: Document,
    sections: Sequence[Section] | None = None,
    include_unreferenced: bool = True,
) -> InterleavedDoc:
    """Interleave ``sections`` (default: all of ``doc``'s) with their media.

    Each image reference inlines the asset at the reference point, followed by
    its caption as a text segment.  With ``include_unreferenced``, assets never
    referenced by the chosen sections are appended at the end, in declaration
    order, so no document content is silently dropped.
    """
    if sections is None:
        sections = doc.sections
    media = doc.media()
    raw: list[Segment] = []
    seen: set[str] = set()
    for section in sections:
        for seg in section.body:
            if seg.kind is SegmentKind.TEXT:
                raw.append(seg)
            else:
                raw.append(seg)
                item = media.get(seg.media_id) if seg.media_id else None
                if item is not None:
                    seen.add(item.id)
                    if item.caption:
                        raw.append(Segment.of_text(item.caption))
    if include_unreferenced:
        for item in doc.figures + doc.tables:
            if item.id not in seen:
                raw.append(Segment.of_image(item.image, media_id=item.id))
                if item.caption:
                    raw.append(Segment.of_text(item.caption))
    return InterleavedDoc(_merge_adjacent_text(raw))


def to_interleaved(doc: Document) -> InterleavedDoc:
    """The document's interleaved text-image context."""
    return interleave(doc)


def to_multi_image(doc: Document, manifest: Sequence[ImageRef]) -> MultiImageDoc:
    """The document's paginated context: one image per page, page order kept.

    Raises:
        EmptyManifest: no page entries were supplied.
    """
    if not manifest:
        raise EmptyManifest(f"document {doc.id!r} has no page manifest")
    return MultiImageDoc(tuple(manifest))


def drop_sections(doc: Document, headings: frozenset[str]) -> Document:
    """A copy of ``doc`` without sections whose normalized heading matches."""
    kept = tuple(s for s in doc.sections if s.heading.strip().lower() not in headings)
    return replace(doc, sections=kept)


# --- rendering ---------------------------------------------------------------


def render_interleaved(idoc: InterleavedDoc) -> str:
    """Segments joined by newlines; images become the literal ``<image>`` marker."""
    return SEGMENT_JOIN.join(
        seg.text if seg.kind is SegmentKind.TEXT else IMAGE_MARKER
        for seg in idoc.segments
    )


def render_multi_image(mdoc: MultiImageDoc) -> str:
    """One ``<image>`` marker per page, newline-joined."""
    return SEGMENT_JOIN.join(IMAGE_MARKER for _ in mdoc.pages)


def render_context(context: InterleavedDoc | MultiImageDoc) -> str:
    if isinstance(context, InterleavedDoc):
        return render_interleaved(context)
    return render_multi_image(context)
