import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docpack.errors import DanglingImageRef, EmptyManifest, MalformedRecord, SchemaViolation
from docpack.ingest import (
    Document,
    ImageRef,
    MediaItem,
    ReviewThread,
    Section,
    Segment,
    SegmentKind,
    Source,
    parse_document,
    render_interleaved,
    render_multi_image,
    serialize_document,
    to_interleaved,
    to_multi_image,
)


def _doc(sections, figures=(), tables=(), **kwargs) -> Document:
    return Document(
        id=kwargs.pop("id", "t1"),
        source=Source.OTHER,
        sections=tuple(sections),
        figures=tuple(figures),
        tables=tuple(tables),
        **kwargs,
    )


def _media(media_id, caption="", width=448, height=448) -> MediaItem:
    return MediaItem(media_id, ImageRef(f"img/{media_id}.png", width, height), caption)


class TestParseDocument:
    def test_maps_all_fields(self, fixture_records):
        doc = parse_document(json.dumps(fixture_records[0]))
        assert doc.id == "d1"
        assert doc.source is Source.OPENREVIEW
        assert len(doc.sections) == 2
        assert len(doc.figures) == 1
        assert doc.figures[0].image.width_px == 896
        assert len(doc.reviews) == 2
        assert doc.reviews[0].reply == "We added two baselines."

    def test_missing_id_names_the_field(self):
        record = {"source": "arxiv", "sections": [], "figures": [], "tables": []}
        with pytest.raises(SchemaViolation) as err:
            parse_document(record)
        assert err.value.field == "id"

    def test_dangling_image_ref(self):
        record = {
            "id": "x",
            "source": "arxiv",
            "sections": [{"heading": "S", "body": [{"img": "f9"}]}],
            "figures": [],
            "tables": [],
        }
        with pytest.raises(DanglingImageRef) as err:
            parse_document(record)
        assert err.value.image_id == "f9"

    def test_bad_json_is_malformed(self):
        with pytest.raises(MalformedRecord):
            parse_document("{not json")
        with pytest.raises(MalformedRecord):
            parse_document('["a", "list"]')

    def test_unknown_fields_ignored_and_unknown_source_is_other(self):
        record = {
            "id": "x",
            "source": "Google-Scholar",
            "sections": [{"heading": "S", "body": [{"t": "hi"}]}],
            "figures": [],
            "tables": [],
            "zzz_extra": {"nested": True},
        }
        doc = parse_document(record)
        assert doc.source is Source.OTHER

    def test_empty_section_body_rejected(self):
        record = {
            "id": "x",
            "source": "arxiv",
            "sections": [{"heading": "S", "body": []}],
            "figures": [],
            "tables": [],
        }
        with pytest.raises(SchemaViolation) as err:
            parse_document(record)
        assert "body" in err.value.field

    def test_fixture_round_trips(self, fixture_docs):
        for doc in fixture_docs:
            assert parse_document(serialize_document(doc)) == doc


class TestToInterleaved:
    def test_identity_on_already_interleaved_body(self):
        f1 = _media("f1")
        doc = _doc(
            [
                Section(
                    "S",
                    (
                        Segment.of_text("A"),
                        Segment.of_image(f1.image, media_id="f1"),
                        Segment.of_text("B"),
                    ),
                )
            ],
            figures=[f1],
        )
        idoc = to_interleaved(doc)
        kinds = [s.kind for s in idoc.segments]
        assert kinds == [SegmentKind.TEXT, SegmentKind.IMAGE, SegmentKind.TEXT]
        assert idoc.segments[0].text == "A"
        assert idoc.segments[2].text == "B"

    def test_adjacent_text_merged_with_newline(self):
        doc = _doc([Section("S", (Segment.of_text("A"), Segment.of_text("B")))])
        idoc = to_interleaved(doc)
        assert len(idoc.segments) == 1
        assert idoc.segments[0].text == "A\nB"

    def test_three_sections_two_figures_counts(self):
        # Hand walk: A | img f1 | Cap1 | B | C | img f2 | D, then Cap1/B/C merge.
        f1 = _media("f1", caption="Cap1")
        f2 = _media("f2")
        doc = _doc(
            [
                Section("One", (Segment.of_text("A"), Segment.of_image(f1.image, media_id="f1"))),
                Section("Two", (Segment.of_text("B"), Segment.of_text("C"))),
                Section("Three", (Segment.of_image(f2.image, media_id="f2"), Segment.of_text("D"))),
            ],
            figures=[f1, f2],
        )
        idoc = to_interleaved(doc)
        assert len(idoc.segments) == 5
        assert idoc.n_images == 2
        assert [s.text for s in idoc.segments if s.kind is SegmentKind.TEXT] == [
            "A",
            "Cap1\nB\nC",
            "D",
        ]

    def test_caption_follows_its_image(self):
        f1 = _media("f1", caption="The caption.")
        doc = _doc([Section("S", (Segment.of_image(f1.image, media_id="f1"),))], figures=[f1])
        idoc = to_interleaved(doc)
        assert idoc.segments[0].kind is SegmentKind.IMAGE
        assert idoc.segments[1].text == "The caption."

    def test_unreferenced_media_appended_at_end(self):
        f1 = _media("f1", caption="Lonely figure.")
        doc = _doc([Section("S", (Segment.of_text("A"),))], figures=[f1])
        idoc = to_interleaved(doc)
        assert idoc.n_images == 1
        assert idoc.segments[-1].text == "Lonely figure."
        assert idoc.segments[-2].kind is SegmentKind.IMAGE

    def test_image_conservation(self, fixture_docs):
        for doc in fixture_docs:
            references = sum(
                1
                for section in doc.sections
                for seg in section.body
                if seg.kind is SegmentKind.IMAGE
            )
            referenced_ids = {
                seg.media_id
                for section in doc.sections
                for seg in section.body
                if seg.kind is SegmentKind.IMAGE
            }
            unreferenced = sum(
                1 for item in doc.figures + doc.tables if item.id not in referenced_ids
            )
            assert to_interleaved(doc).n_images == references + unreferenced

    def test_order_preservation_without_captions(self):
        # With captionless media, interleaved text equals section text in order.
        f1 = _media("f1")
        doc = _doc(
            [
                Section("One", (Segment.of_text("A"), Segment.of_image(f1.image, media_id="f1"))),
                Section("Two", (Segment.of_text("B"),)),
            ],
            figures=[f1],
        )
        idoc = to_interleaved(doc)
        assert idoc.text() == "A\nB"


class TestMultiImage:
    def test_three_page_manifest(self, fixture_docs):
        d5 = fixture_docs[4]
        mdoc = to_multi_image(d5, d5.pages)
        assert len(mdoc.pages) == 3
        assert mdoc.pages == d5.pages

    def test_empty_manifest(self, fixture_docs):
        with pytest.raises(EmptyManifest):
            to_multi_image(fixture_docs[0], [])

    def test_one_marker_per_page(self, fixture_docs):
        pages = tuple(ImageRef(f"p{i}", 100, 100) for i in range(12))
        mdoc = to_multi_image(fixture_docs[0], pages)
        assert render_multi_image(mdoc).count("<image>") == 12
        assert render_multi_image(mdoc) == "\n".join(["<image>"] * 12)


class TestRendering:
    def test_interleaved_render_pattern(self):
        f1 = _media("f1")
        doc = _doc(
            [
                Section(
                    "S",
                    (
                        Segment.of_text("alpha"),
                        Segment.of_image(f1.image, media_id="f1"),
                        Segment.of_text("beta"),
                    ),
                )
            ],
            figures=[f1],
        )
        assert render_interleaved(to_interleaved(doc)) == "alpha\n<image>\nbeta"


# --- round-trip property ------------------------------------------------------

_text = st.text(min_size=1, max_size=20)
_dims = st.integers(min_value=1, max_value=4000)


@st.composite
def _documents(draw):
    n_figures = draw(st.integers(0, 2))
    n_tables = draw(st.integers(0, 2))
    figures = tuple(
        MediaItem(f"f{i}", ImageRef(f"uri/f{i}", draw(_dims), draw(_dims)), draw(st.text(max_size=12)))
        for i in range(n_figures)
    )
    tables = tuple(
        MediaItem(f"t{i}", ImageRef(f"uri/t{i}", draw(_dims), draw(_dims)), draw(st.text(max_size=12)))
        for i in range(n_tables)
    )
    media_ids = [m.id for m in figures + tables]
    media = {m.id: m for m in figures + tables}
    sections = []
    for i in range(draw(st.integers(1, 3))):
        body = []
        for _ in range(draw(st.integers(1, 4))):
            if media_ids and draw(st.booleans()):
                ref = draw(st.sampled_from(media_ids))
                body.append(Segment.of_image(media[ref].image, media_id=ref))
            else:
                body.append(Segment.of_text(draw(_text)))
        sections.append(Section(f"H{i}", tuple(body)))
    reviews = []
    for _ in range(draw(st.integers(0, 2))):
        reply = draw(st.one_of(st.none(), _text))
        reviews.append((draw(_text), reply))
    return Document(
        id=draw(st.uuids()).hex[:8],
        source=draw(st.sampled_from(list(Source))),
        sections=tuple(sections),
        figures=figures,
        tables=tables,
        reviews=tuple(ReviewThread(r, p) for r, p in reviews),
        title=draw(st.one_of(st.none(), _text)),
        abstract=draw(st.one_of(st.none(), _text)),
        language=draw(st.sampled_from(["en", "zh", "de"])),
        pages=tuple(
            ImageRef(f"page/{i}", draw(_dims), draw(_dims)) for i in range(draw(st.integers(0, 2)))
        ),
    )


@settings(max_examples=60, deadline=None)
@given(_documents())
def test_serialize_parse_round_trip(doc):
    assert parse_document(serialize_document(doc)) == doc
