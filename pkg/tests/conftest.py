"""Shared fixtures: a small handcrafted corpus with hand-countable structure.

Five documents cover the construction routes:

* d1 (openreview): title, abstract, intro + experiments sections, one
  captioned figure, two review threads (both with replies).
* d2 (arxiv): title, abstract, three sections, one captioned figure and one
  captioned table.
* d3 (scihub): title but no abstract, an evaluation section, one uncaptioned
  figure.
* d4 (other): a single bare section; matches no structured task.
* d5 (arxiv): title, abstract, one section, a 3-page manifest, one review
  thread without a reply.
"""

from __future__ import annotations

import json

import pytest

from docpack.ingest import parse_document

# Acceptance tests append (label, passed) here; the terminal-summary hook
# prints one line per criterion even under captured output.
ACCEPTANCE_VERDICTS: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for label, passed in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(
                f"ACCEPTANCE {label}: {'PASS' if passed else 'FAIL'}"
            )


def _record_d1() -> dict:
    return {
        "id": "d1",
        "source": "openreview",
        "title": "Adaptive Mesh Refinement for Storm Modeling",
        "abstract": "We present a storm-scale adaptive mesh method.",
        "language": "en",
        "sections": [
            {
                "heading": "Introduction",
                "body": [{"t": "Storm forecasting needs adaptive grids."}],
            },
            {
                "heading": "Experiments",
                "body": [
                    {"t": "We evaluate the mesh on two storm seasons."},
                    {"img": "d1f1"},
                ],
            },
        ],
        "figures": [
            {
                "id": "d1f1",
                "uri": "img/d1f1.png",
                "width": 896,
                "height": 448,
                "caption": "Mesh refinement around a storm cell.",
            }
        ],
        "tables": [],
        "reviews": [
            {"review": "The mesh idea is solid but baselines are thin.", "reply": "We added two baselines."},
            {"review": "Please clarify the refinement criterion.", "reply": "The criterion is now in Section 2."},
        ],
    }


def _record_d2() -> dict:
    return {
        "id": "d2",
        "source": "arxiv",
        "title": "Sparse Solvers for Graph Laplacians",
        "abstract": "A sparse solver family with provable speedups.",
        "sections": [
            {"heading": "Introduction", "body": [{"t": "Graph Laplacians appear everywhere."}]},
            {
                "heading": "Method",
                "body": [
                    {"t": "Our solver factorizes the Laplacian lazily."},
                    {"img": "d2f1"},
                    {"t": "Factorization is cache friendly."},
                ],
            },
            {
                "heading": "Experiments",
                "body": [
                    {"t": "We benchmark on road networks."},
                    {"img": "d2t1"},
                ],
            },
        ],
        "figures": [
            {
                "id": "d2f1",
                "uri": "img/d2f1.png",
                "width": 448,
                "height": 448,
                "caption": "Lazy factorization pipeline.",
            }
        ],
        "tables": [
            {
                "id": "d2t1",
                "uri": "img/d2t1.png",
                "width": 896,
                "height": 896,
                "caption": "Runtime on road networks.",
            }
        ],
    }


def _record_d3() -> dict:
    return {
        "id": "d3",
        "source": "scihub",
        "title": "Enzyme Kinetics under Pressure",
        "sections": [
            {"heading": "Background", "body": [{"t": "Pressure alters reaction rates."}]},
            {
                "heading": "Evaluation",
                "body": [{"t": "Rates were measured at five pressures."}, {"img": "d3f1"}],
            },
        ],
        "figures": [
            {"id": "d3f1", "uri": "img/d3f1.png", "width": 448, "height": 896, "caption": ""}
        ],
        "tables": [],
    }


def _record_d4() -> dict:
    return {
        "id": "d4",
        "source": "other",
        "sections": [
            {"heading": "Notes", "body": [{"t": "Meeting notes on lab calibration."}]}
        ],
        "figures": [],
        "tables": [],
    }


def _record_d5() -> dict:
    return {
        "id": "d5",
        "source": "arxiv",
        "title": "A Survey of Tidal Energy Converters",
        "abstract": "We survey converter designs and their efficiency.",
        "sections": [
            {"heading": "Introduction", "body": [{"t": "Tidal energy is predictable."}]}
        ],
        "figures": [],
        "tables": [],
        "reviews": [{"review": "The survey misses floating designs."}],
        "pages": [
            {"uri": "pages/d5-1.png", "width": 896, "height": 1344},
            {"uri": "pages/d5-2.png", "width": 896, "height": 1344},
            {"uri": "pages/d5-3.png", "width": 896, "height": 1344},
        ],
    }


@pytest.fixture(scope="session")
def fixture_records() -> list[dict]:
    return [_record_d1(), _record_d2(), _record_d3(), _record_d4(), _record_d5()]


@pytest.fixture(scope="session")
def fixture_docs(fixture_records):
    return [parse_document(r) for r in fixture_records]


@pytest.fixture()
def corpus_path(tmp_path, fixture_records):
    path = tmp_path / "corpus.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for record in fixture_records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path
