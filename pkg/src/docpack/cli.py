"""Command-line front end: ingest -> build-qa -> pack -> stats / bench.

Each subcommand reads and writes plain files so stages can be re-run and
inspected independently: ``ingest`` normalizes a JSON-lines corpus into a
document store, ``build-qa`` turns documents into a conversation store,
``pack`` measures and packs conversations into binary shard files plus a
packing report, ``stats`` prints corpus statistics, and ``bench`` compares
packing against naive per-sample padding on a synthetic stream.

Exit codes: 0 success, 2 configuration error, 3 parse error, 4 packer error.
The DOCPACK_LOG_LEVEL environment variable controls log verbosity only.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator, Sequence

from . import packfile, stats
from .config import CONTEXT_FORMATS, PipelineConfig, load_config_file, resolve_config
from .errors import (
    AtomTooLarge,
    ConfigError,
    DocpackError,
    EmptyQAList,
    MissingField,
    NoReviews,
)
from .ingest import Document, MultiImageDoc, parse_document, serialize_document
from .packer import PackedSample, PackerState, flush, push_sample
from .qa import (
    STRUCTURED_TASKS,
    Conversation,
    Task,
    attach_external_qa,
    build_ntp,
    build_review_reply,
    build_structured_tasks,
    conversation_from_record,
    conversation_to_record,
)
from .synth import DISTRIBUTIONS, DistributionSpec, synthesize_stream
from .tokens import measure_sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_PACK = 4

logger = logging.getLogger("docpack")


def _setup_logging() -> None:
    level = os.environ.get("DOCPACK_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _iter_jsonl(path) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def _load_documents(path, strict: bool) -> tuple[list[Document], int]:
    documents = []
    failures = 0
    for lineno, line in _iter_jsonl(path):
        try:
            documents.append(parse_document(line))
        except DocpackError as exc:
            failures += 1
            logger.error("line %d: %s", lineno, exc)
    if strict and failures:
        raise SystemExit(EXIT_PARSE)
    return documents, failures


# --- ingest ------------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig) -> int:
    """Normalize a raw corpus into the document store."""
    n_docs = 0
    failures = 0
    out_path = Path(cfg.output_uri)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as out:
        for lineno, line in _iter_jsonl(cfg.input_uri):
            try:
                doc = parse_document(line)
            except DocpackError as exc:
                failures += 1
                logger.error("line %d: %s", lineno, exc)
                continue
            out.write(serialize_document(doc))
            out.write("\n")
            n_docs += 1
    if n_docs == 0 and failures == 0:
        logger.warning("input corpus %s is empty", cfg.input_uri)
    logger.info("ingested %d documents (%d failed)", n_docs, failures)
    if cfg.strict and failures:
        return EXIT_PARSE
    return EXIT_OK


# --- build-qa ----------------------------------------------------------------


def _load_sidecar(path, value_key: str) -> dict[str, Any]:
    table: dict[str, Any] = {}
    if not path:
        return table
    for _, line in _iter_jsonl(path):
        record = json.loads(line)
        table[str(record["doc_id"])] = record[value_key]
    return table


def _doc_conversations(
    doc: Document,
    cfg: PipelineConfig,
    external_qa: dict[str, Any],
    translations: dict[str, str],
) -> list[Conversation]:
    conversations: list[Conversation] = []
    structured = [t for t in STRUCTURED_TASKS if t in cfg.tasks]
    for task in structured:
        try:
            conversations.extend(
                build_structured_tasks(
                    doc,
                    {task},
                    templates=cfg.templates,
                    translation=translations.get(doc.id),
                )
            )
        except MissingField as exc:
            logger.info("doc %s: skipping %s (%s)", doc.id, task.value, exc)
    if (Task.REVIEW_WRITING in cfg.tasks or Task.REPLY_WRITING in cfg.tasks) and doc.reviews:
        try:
            for conv in build_review_reply(doc, templates=cfg.templates):
                if conv.turns[0].task in cfg.tasks:
                    conversations.append(conv)
        except NoReviews:
            pass
    if Task.EXTERNAL_GENERATED in cfg.tasks and doc.id in external_qa:
        try:
            pairs = [(q, a) for q, a in external_qa[doc.id]]
            conversations.append(attach_external_qa(doc, pairs))
        except (EmptyQAList, ValueError) as exc:
            logger.warning("doc %s: bad external QA (%s)", doc.id, exc)
    if not conversations and Task.NTP in cfg.tasks:
        try:
            conversations.append(build_ntp(doc))
        except MissingField as exc:
            logger.info("doc %s: skipping ntp (%s)", doc.id, exc)
    return conversations


def _apply_context_format(
    conversations: list[Conversation], doc: Document, cfg: PipelineConfig
) -> list[Conversation]:
    if cfg.context_format == "interleaved":
        return conversations
    paged = []
    if doc.pages:
        pages = MultiImageDoc(doc.pages)
        paged = [replace(conv, context=pages) for conv in conversations]
    elif cfg.context_format in ("multi_image", "both"):
        logger.info("doc %s: no page manifest, skipping multi-image contexts", doc.id)
    if cfg.context_format == "multi_image":
        return paged
    return conversations + paged


def cmd_build_qa(cfg: PipelineConfig, external_qa_path=None, translations_path=None) -> int:
    """Build the conversation store from the document store."""
    documents, _ = _load_documents(cfg.input_uri, cfg.strict)
    external_qa = _load_sidecar(external_qa_path, "qa")
    translations = _load_sidecar(translations_path, "text")
    counts: Counter[str] = Counter()
    out_path = Path(cfg.output_uri)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    n_out = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for doc in documents:
            conversations = _doc_conversations(doc, cfg, external_qa, translations)
            conversations = _apply_context_format(conversations, doc, cfg)
            for conv in conversations:
                counts[conv.turns[0].task.value] += 1
                out.write(json.dumps(conversation_to_record(conv), ensure_ascii=False, separators=(",", ":")))
                out.write("\n")
                n_out += 1
    for task_name in sorted(counts):
        print(f"{task_name}: {counts[task_name]}")
    print(f"total conversations: {n_out}")
    return EXIT_OK


# --- pack --------------------------------------------------------------------


def _load_conversations(path, strict: bool) -> list[Conversation]:
    conversations = []
    failures = 0
    for lineno, line in _iter_jsonl(path):
        try:
            conversations.append(conversation_from_record(json.loads(line)))
        except (ValueError, KeyError, DocpackError) as exc:
            failures += 1
            logger.error("line %d: %s", lineno, exc)
    if strict and failures:
        raise SystemExit(EXIT_PARSE)
    return conversations


def cmd_pack(cfg: PipelineConfig, debug_json: bool = False) -> int:
    """Measure conversations, pack per shard, write shard files and a report."""
    conversations = _load_conversations(cfg.input_uri, cfg.strict)
    out_dir = Path(cfg.output_uri)
    out_dir.mkdir(parents=True, exist_ok=True)

    shards: list[list[PackedSample]] = [[] for _ in range(cfg.shard_count)]
    states = [PackerState() for _ in range(cfg.shard_count)]
    try:
        for index, conv in enumerate(conversations):
            sample = measure_sample(
                conv,
                cfg.tokenizer,
                cfg.tiles,
                sample_id=f"{conv.doc_id}:{conv.turns[0].task.value}:{index}",
            )
            shard = index % cfg.shard_count
            shards[shard].extend(push_sample(states[shard], sample, cfg.packer))
        for shard in range(cfg.shard_count):
            shards[shard].extend(flush(states[shard], cfg.packer))
    except AtomTooLarge as exc:
        logger.error("packing aborted: %s", exc)
        return EXIT_PACK

    for shard, records in enumerate(shards):
        path = out_dir / f"packed-{shard:05d}.bin"
        packfile.write_packfile(path, records, cfg.packer.t_tok, cfg.packer.t_img)
        if debug_json:
            packfile.write_debug_jsonl(out_dir / f"packed-{shard:05d}.jsonl", records)

    all_packed = [p for records in shards for p in records]
    report = stats.packing_report(all_packed, cfg.packer)
    (out_dir / "report.json").write_text(stats.to_json(stats.packing_report_to_dict(report)))
    (out_dir / "report.txt").write_text(stats.packing_report_table(report) + "\n")
    print(stats.packing_report_table(report))
    return EXIT_OK


# --- stats -------------------------------------------------------------------


def cmd_stats(cfg: PipelineConfig) -> int:
    """Corpus statistics over the conversation store."""
    conversations = _load_conversations(cfg.input_uri, cfg.strict)
    measured = [
        measure_sample(conv, cfg.tokenizer, cfg.tiles, sample_id=f"{conv.doc_id}:{i}")
        for i, conv in enumerate(conversations)
    ]
    result = stats.corpus_stats(conversations, measured)
    table = stats.corpus_stats_table(result)
    print(table)
    if cfg.output_uri:
        out_dir = Path(cfg.output_uri)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.json").write_text(stats.to_json(stats.corpus_stats_to_dict(result)))
        (out_dir / "stats.txt").write_text(table + "\n")
    return EXIT_OK


# --- bench -------------------------------------------------------------------


def _naive_padding(samples, packer_cfg) -> tuple[int, int, int]:
    """(sequences, payload, pad) when every sample is padded individually."""
    from .packer import check_sample

    sequences = payload = pad = 0
    for sample in samples:
        parts, remainder = check_sample(sample, packer_cfg)
        for part in [*parts, remainder]:
            sequences += 1
            payload += part.n_tokens
            pad += packer_cfg.t_tok - part.n_tokens
    return sequences, payload, pad


def cmd_bench(cfg: PipelineConfig, spec: DistributionSpec) -> int:
    """Compare packing against the naive baseline on a synthetic stream."""
    from .packer import pack_stream

    packed = list(pack_stream(synthesize_stream(spec, cfg.seed), cfg.packer))
    report = stats.packing_report(packed, cfg.packer)
    naive_sequences, naive_payload, naive_pad = _naive_padding(
        synthesize_stream(spec, cfg.seed), cfg.packer
    )

    print(f"distribution: {spec.kind}, samples: {spec.n_samples}, seed: {cfg.seed}")
    print()
    print("packed policy")
    print(stats.packing_report_table(report))
    print()
    naive_physical = naive_payload + naive_pad
    naive_util = naive_payload / naive_physical if naive_physical else 1.0
    print("naive policy")
    print(f"sequences: {naive_sequences}")
    print(f"payload tokens: {naive_payload}")
    print(f"pad tokens: {naive_pad}")
    print(f"utilization: {naive_util:.4f}")
    print()
    print(f"waste_reduction_ratio: {report.waste_reduction_ratio:.4f}")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _add_io_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file; flags override its values")
    parser.add_argument("--input", "-i", help="input path")
    parser.add_argument("--output", "-o", help="output path")
    parser.add_argument("--seed", type=int, help="RNG seed for seeded stages")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true", default=None, help="fail on any bad record")
    mode.add_argument("--lenient", dest="strict", action="store_false", help="skip bad records (default)")


def _add_packer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-img", type=int, help="image threshold per packed sequence")
    parser.add_argument("--t-tok", type=int, help="token threshold per packed sequence")
    parser.add_argument("--max-subsamples", type=int, help="sub-sample limit per packed sequence")
    parser.add_argument("--buffer-cap", type=int, help="buffer list capacity")
    parser.add_argument("--match-policy", choices=("first_fit", "front_only"))


def _add_measure_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tile-resolution-px", type=int, help="tile edge length in pixels")
    parser.add_argument("--max-tiles", type=int, help="tile cap per image")
    parser.add_argument("--tokens-per-tile", type=int, help="token cost per tile")
    parser.add_argument(
        "--no-thumbnail", dest="use_thumbnail", action="store_false", default=None,
        help="disable the thumbnail tile for multi-tile grids",
    )
    parser.add_argument("--tokenizer-kind", choices=("reference", "external"))
    parser.add_argument("--tokenizer-command", help="external tokenizer executable (stdin text, stdout count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docpack",
        description="Build multimodal training conversations and pack them into fixed-budget sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="normalize a raw JSONL corpus into the document store")
    _add_io_flags(p_ingest)

    p_qa = sub.add_parser("build-qa", help="construct conversations from the document store")
    _add_io_flags(p_qa)
    p_qa.add_argument("--tasks", help="comma-separated task names (default: all)")
    p_qa.add_argument("--context-format", choices=CONTEXT_FORMATS)
    p_qa.add_argument("--external-qa", help="JSONL sidecar {doc_id, qa: [[q, a], ...]}")
    p_qa.add_argument("--translations", help="JSONL sidecar {doc_id, text}")

    p_pack = sub.add_parser("pack", help="measure and pack the conversation store")
    _add_io_flags(p_pack)
    _add_packer_flags(p_pack)
    _add_measure_flags(p_pack)
    p_pack.add_argument("--shard-count", type=int, help="number of independent shards")
    p_pack.add_argument("--debug-json", action="store_true", help="also write JSONL debug renderings")

    p_stats = sub.add_parser("stats", help="corpus statistics over the conversation store")
    _add_io_flags(p_stats)
    _add_measure_flags(p_stats)

    p_bench = sub.add_parser("bench", help="packed-vs-naive padding benchmark on a synthetic stream")
    _add_io_flags(p_bench)
    _add_packer_flags(p_bench)
    p_bench.add_argument("--dist", choices=DISTRIBUTIONS, default="lognormal")
    p_bench.add_argument("--n-samples", type=int, default=1000)
    p_bench.add_argument("--min-tokens", type=int, default=1024)
    p_bench.add_argument("--max-tokens", type=int, default=16384)
    p_bench.add_argument("--image-prob", type=float, default=0.0)
    p_bench.add_argument("--max-images", type=int, default=8)
    p_bench.add_argument("--atom-tokens", type=int, default=4096)
    return parser


def _resolve(args: argparse.Namespace, need_input: bool = True, need_output: bool = True) -> PipelineConfig:
    file_values = load_config_file(args.config) if args.config else {}
    cfg = resolve_config(
        file_values,
        input=args.input,
        output=args.output,
        seed=args.seed,
        strict=args.strict,
        tasks=getattr(args, "tasks", None),
        context_format=getattr(args, "context_format", None),
        shard_count=getattr(args, "shard_count", None),
        t_img=getattr(args, "t_img", None),
        t_tok=getattr(args, "t_tok", None),
        max_subsamples=getattr(args, "max_subsamples", None),
        buffer_cap=getattr(args, "buffer_cap", None),
        match_policy=getattr(args, "match_policy", None),
        tile_resolution_px=getattr(args, "tile_resolution_px", None),
        max_tiles=getattr(args, "max_tiles", None),
        tokens_per_tile=getattr(args, "tokens_per_tile", None),
        use_thumbnail=getattr(args, "use_thumbnail", None),
        tokenizer_kind=getattr(args, "tokenizer_kind", None),
        tokenizer_command=getattr(args, "tokenizer_command", None),
    )
    if need_input and not cfg.input_uri:
        raise ConfigError("an input path is required (--input or config file)")
    if need_output and not cfg.output_uri:
        raise ConfigError("an output path is required (--output or config file)")
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(_resolve(args))
        if args.command == "build-qa":
            return cmd_build_qa(
                _resolve(args),
                external_qa_path=args.external_qa,
                translations_path=args.translations,
            )
        if args.command == "pack":
            return cmd_pack(_resolve(args), debug_json=args.debug_json)
        if args.command == "stats":
            return cmd_stats(_resolve(args, need_output=False))
        if args.command == "bench":
            cfg = _resolve(args, need_input=False, need_output=False)
            spec = DistributionSpec(
                kind=args.dist,
                n_samples=args.n_samples,
                min_tokens=args.min_tokens,
                max_tokens=args.max_tokens,
                image_prob=args.image_prob,
                max_images=args.max_images,
                atom_tokens=args.atom_tokens,
            )
            return cmd_bench(cfg, spec)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SystemExit as exc:  # strict-mode parse failures funnel through here
        if isinstance(exc.code, int):
            return exc.code
        raise
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return EXIT_PARSE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
