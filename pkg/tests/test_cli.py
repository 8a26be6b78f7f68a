import hashlib
import json
from collections import Counter

import pytest

from docpack.cli import EXIT_CONFIG, EXIT_PACK, EXIT_PARSE, main
from docpack.packer import PackerConfig
from docpack.packfile import read_packfile
from docpack.qa import conversation_from_record
from docpack.synth import DistributionSpec, synthesize_stream
from docpack.tokens import measure_sample


def _run(*argv) -> int:
    return main(list(argv))


def _read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.fixture()
def docs_path(tmp_path, corpus_path):
    out = tmp_path / "docs.jsonl"
    assert _run("ingest", "-i", str(corpus_path), "-o", str(out)) == 0
    return out


@pytest.fixture()
def convs_path(tmp_path, docs_path):
    out = tmp_path / "convs.jsonl"
    assert _run("build-qa", "-i", str(docs_path), "-o", str(out)) == 0
    return out


class TestIngest:
    def test_valid_corpus(self, docs_path, fixture_records):
        assert len(docs_path.read_text().splitlines()) == len(fixture_records)

    def test_lenient_skips_bad_lines(self, tmp_path, corpus_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(corpus_path.read_text() + "{broken\n")
        out = tmp_path / "docs.jsonl"
        assert _run("ingest", "-i", str(bad), "-o", str(out)) == 0
        assert len(out.read_text().splitlines()) == 5

    def test_strict_fails_on_bad_line(self, tmp_path, corpus_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(corpus_path.read_text() + "{broken\n")
        out = tmp_path / "docs.jsonl"
        assert _run("ingest", "--strict", "-i", str(bad), "-o", str(out)) == EXIT_PARSE

    def test_empty_corpus_warns_but_succeeds(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        out = tmp_path / "docs.jsonl"
        assert _run("ingest", "-i", str(empty), "-o", str(out)) == 0
        assert out.read_text() == ""

    def test_same_input_output_is_config_error(self, corpus_path):
        assert _run("ingest", "-i", str(corpus_path), "-o", str(corpus_path)) == EXIT_CONFIG


class TestBuildQA:
    def test_review_reply_counts(self, convs_path):
        records = _read_jsonl(convs_path)
        tasks = [r["turns"][0]["task"] for r in records]
        # d1 has 2 threads with replies, d5 has 1 review without a reply
        assert tasks.count("review_writing") == 3
        assert tasks.count("reply_writing") == 2

    def test_task_filter_with_skip_logging(self, tmp_path, docs_path):
        out = tmp_path / "convs.jsonl"
        assert _run(
            "build-qa", "-i", str(docs_path), "-o", str(out), "--tasks", "abstract_writing"
        ) == 0
        records = _read_jsonl(out)
        # only d1, d2, d5 carry abstracts
        assert len(records) == 3
        assert all(r["turns"][0]["task"] == "abstract_writing" for r in records)

    def test_ntp_fallback_for_bare_document(self, convs_path):
        records = _read_jsonl(convs_path)
        d4 = [r for r in records if r["doc_id"] == "d4"]
        assert len(d4) == 1
        assert d4[0]["turns"][0]["task"] == "ntp"

    def test_context_format_both_duplicates_paged_docs(self, tmp_path, docs_path):
        plain = tmp_path / "plain.jsonl"
        both = tmp_path / "both.jsonl"
        assert _run("build-qa", "-i", str(docs_path), "-o", str(plain)) == 0
        assert _run("build-qa", "-i", str(docs_path), "-o", str(both), "--context-format", "both") == 0
        plain_records = _read_jsonl(plain)
        both_records = _read_jsonl(both)
        d5_plain = [r for r in plain_records if r["doc_id"] == "d5"]
        d5_both = [r for r in both_records if r["doc_id"] == "d5"]
        assert len(d5_both) == 2 * len(d5_plain)
        formats = {r["context_format"] for r in d5_both}
        assert formats == {"interleaved", "multi_image"}

    def test_external_qa_sidecar(self, tmp_path, docs_path):
        sidecar = tmp_path / "external.jsonl"
        sidecar.write_text(
            json.dumps({"doc_id": "d3", "qa": [["Q1", "A1"], ["Q2", "A2"], ["Q3", "A3"]]}) + "\n"
        )
        out = tmp_path / "convs.jsonl"
        assert _run(
            "build-qa",
            "-i",
            str(docs_path),
            "-o",
            str(out),
            "--external-qa",
            str(sidecar),
            "--tasks",
            "external_generated",
        ) == 0
        records = _read_jsonl(out)
        assert len(records) == 1
        conv = conversation_from_record(records[0])
        assert conv.doc_id == "d3"
        assert len(conv.turns) == 3
        assert all(t.generated_by_model for t in conv.turns)

    def test_template_override_from_config(self, tmp_path, docs_path):
        config = tmp_path / "docpack.toml"
        config.write_text(
            "[templates]\nabstract_writing = \"Summarize this paper in one paragraph.\"\n"
        )
        out = tmp_path / "convs.jsonl"
        assert _run(
            "build-qa", "--config", str(config), "-i", str(docs_path), "-o", str(out),
            "--tasks", "abstract_writing",
        ) == 0
        records = _read_jsonl(out)
        assert records
        assert all(
            r["turns"][0]["question"] == "Summarize this paper in one paragraph."
            for r in records
        )

    def test_translation_sidecar(self, tmp_path, docs_path):
        sidecar = tmp_path / "translations.jsonl"
        sidecar.write_text(json.dumps({"doc_id": "d1", "text": "实验翻译。"}) + "\n")
        out = tmp_path / "convs.jsonl"
        assert _run(
            "build-qa",
            "-i",
            str(docs_path),
            "-o",
            str(out),
            "--translations",
            str(sidecar),
            "--tasks",
            "translation",
        ) == 0
        records = _read_jsonl(out)
        assert [r["doc_id"] for r in records] == ["d1"]
        assert records[0]["turns"][0]["task"] == "translation"


class TestPack:
    def test_end_to_end_outputs(self, tmp_path, convs_path):
        out_dir = tmp_path / "packed"
        assert _run("pack", "-i", str(convs_path), "-o", str(out_dir)) == 0
        header, records = read_packfile(out_dir / "packed-00000.bin")
        assert header == {"t_tok": 32768, "t_img": 48}
        assert records
        report = json.loads((out_dir / "report.json").read_text())
        assert report["packed_sequences"] == len(records)
        assert 0.0 <= report["utilization"] <= 1.0
        assert (out_dir / "report.txt").exists()

    def test_sharding_writes_one_file_per_shard(self, tmp_path, convs_path):
        out_dir = tmp_path / "packed"
        assert _run(
            "pack", "-i", str(convs_path), "-o", str(out_dir), "--shard-count", "2",
            "--t-tok", "2048",
        ) == 0
        assert (out_dir / "packed-00000.bin").exists()
        assert (out_dir / "packed-00001.bin").exists()

    def test_debug_jsonl_matches_binary(self, tmp_path, convs_path):
        out_dir = tmp_path / "packed"
        assert _run("pack", "-i", str(convs_path), "-o", str(out_dir), "--debug-json") == 0
        _, records = read_packfile(out_dir / "packed-00000.bin")
        debug = _read_jsonl(out_dir / "packed-00000.jsonl")
        assert len(debug) == len(records)
        assert debug[0]["n_tokens"] == records[0].n_tokens

    def test_token_threshold_below_image_atom_aborts(self, tmp_path, convs_path):
        out_dir = tmp_path / "packed"
        assert _run(
            "pack", "-i", str(convs_path), "-o", str(out_dir), "--t-tok", "100"
        ) == EXIT_PACK

    def test_config_file_with_flag_override(self, tmp_path, convs_path):
        config = tmp_path / "docpack.toml"
        config.write_text('[packer]\nt_tok = 1024\nt_img = 8\n')
        out_dir = tmp_path / "packed"
        assert _run(
            "pack", "--config", str(config), "-i", str(convs_path), "-o", str(out_dir),
            "--t-tok", "4096",
        ) == 0
        header, _ = read_packfile(out_dir / "packed-00000.bin")
        assert header == {"t_tok": 4096, "t_img": 8}

    def test_golden_digest(self, tmp_path, convs_path):
        out_dir = tmp_path / "packed"
        assert _run(
            "pack", "-i", str(convs_path), "-o", str(out_dir), "--t-tok", "2048", "--seed", "0"
        ) == 0

        # structural audit backing the pinned digest: the file's atoms must
        # equal an independent re-measurement of the conversation store
        cfg = PackerConfig(t_tok=2048)
        expected: Counter = Counter()
        for index, record in enumerate(_read_jsonl(convs_path)):
            conv = conversation_from_record(record)
            sample = measure_sample(
                conv, sample_id=f"{conv.doc_id}:{conv.turns[0].task.value}:{index}"
            )
            for atom in sample.atoms:
                expected[(atom.source_sample_id, atom.kind, atom.role, atom.token_length)] += 1
        header, records = read_packfile(out_dir / "packed-00000.bin")
        assert header == {"t_tok": 2048, "t_img": 48}
        emitted: Counter = Counter()
        for p in records:
            assert p.n_tokens <= cfg.t_tok and p.n_images <= cfg.t_img
            assert p.physical_length == cfg.t_tok
            for atom in p.iter_atoms():
                emitted[(atom.source_sample_id, atom.kind, atom.role, atom.token_length)] += 1
        assert emitted == expected

        digest = hashlib.sha256((out_dir / "packed-00000.bin").read_bytes()).hexdigest()
        assert digest == "58ca0a25456c2de77f0e9868012fea53ae2bfa10f9f36b2675ef0007cfd20cb2"


class TestStats:
    def test_prints_table_and_writes_files(self, tmp_path, convs_path, capsys):
        out_dir = tmp_path / "stats"
        assert _run("stats", "-i", str(convs_path), "-o", str(out_dir)) == 0
        printed = capsys.readouterr().out
        assert "Total Conversations" in printed
        stats = json.loads((out_dir / "stats.json").read_text())
        n_convs = len(_read_jsonl(convs_path))
        assert stats["total_conversations"] == n_convs


class TestBench:
    def test_exact_threshold_stream_has_ratio_one(self, capsys):
        assert _run(
            "bench", "--dist", "uniform", "--n-samples", "16",
            "--min-tokens", "32768", "--max-tokens", "32768",
        ) == 0
        out = capsys.readouterr().out
        assert "waste_reduction_ratio: 1.0000" in out

    def test_half_threshold_stream_packs_perfectly(self, capsys):
        assert _run(
            "bench", "--dist", "uniform", "--n-samples", "10",
            "--min-tokens", "16384", "--max-tokens", "16384",
        ) == 0
        out = capsys.readouterr().out
        rows = [line for line in out.splitlines() if line.startswith("Utilization")]
        assert rows and rows[0].split()[-1] == "1.0000"

    def test_lognormal_smoke(self, capsys):
        assert _run(
            "bench", "--dist", "lognormal", "--n-samples", "200", "--seed", "7",
            "--min-tokens", "1000", "--max-tokens", "16000", "--image-prob", "0.25",
        ) == 0
        out = capsys.readouterr().out
        assert "packed policy" in out
        assert "naive policy" in out

    def test_lognormal_ratio_matches_independent_simulation(self, capsys):
        from test_stats import _simulate_policies

        assert _run(
            "bench", "--dist", "lognormal", "--n-samples", "300", "--seed", "11",
            "--min-tokens", "1000", "--max-tokens", "16000",
        ) == 0
        out = capsys.readouterr().out
        printed = [l for l in out.splitlines() if l.startswith("waste_reduction_ratio: ")][0]
        spec = DistributionSpec(
            kind="lognormal", n_samples=300, min_tokens=1000, max_tokens=16000
        )
        sizes = [s.n_tokens for s in synthesize_stream(spec, 11)]
        naive_pad, packed_pad = _simulate_policies(sizes, PackerConfig())
        expected = naive_pad / max(packed_pad, 1)
        assert printed == f"waste_reduction_ratio: {expected:.4f}"


class TestExitCodes:
    def test_unknown_task_is_config_error(self, tmp_path, docs_path):
        out = tmp_path / "convs.jsonl"
        assert _run(
            "build-qa", "-i", str(docs_path), "-o", str(out), "--tasks", "no_such_task"
        ) == EXIT_CONFIG

    def test_missing_input_file_is_parse_error(self, tmp_path):
        out = tmp_path / "docs.jsonl"
        assert _run("ingest", "-i", str(tmp_path / "nope.jsonl"), "-o", str(out)) == EXIT_PARSE

    def test_missing_config_file(self, tmp_path):
        assert _run(
            "ingest", "--config", str(tmp_path / "nope.toml"), "-i", "a", "-o", "b"
        ) == EXIT_CONFIG
