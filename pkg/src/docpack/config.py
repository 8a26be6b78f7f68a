"""Pipeline configuration: defaults, TOML file loading, flag overrides.

A single TOML file can configure every stage; command-line flags override
file values field by field.  Layout::

    input = "corpus.jsonl"
    output = "out/"
    tasks = ["abstract_writing", "review_writing"]
    context_format = "interleaved"
    seed = 0
    shard_count = 1

    [packer]
    t_img = 48
    t_tok = 32768
    max_subsamples = 64
    buffer_cap = 512

    [tiles]
    tile_resolution_px = 448
    max_tiles = 24
    tokens_per_tile = 256
    use_thumbnail = true

    [tokenizer]
    kind = "reference"

    [templates]
    abstract_writing = "..."
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .packer import PackerConfig
from .qa import DEFAULT_TEMPLATES, Task, TemplateSet
from .tokens import TileConfig, TokenizerKind, TokenizerSpec

CONTEXT_FORMATS = ("interleaved", "multi_image", "both")

ALL_TASKS = frozenset(Task)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run needs, resolved from file and flags."""

    input_uri: str
    output_uri: str
    packer: PackerConfig = field(default_factory=PackerConfig)
    tiles: TileConfig = field(default_factory=TileConfig)
    tokenizer: TokenizerSpec = field(default_factory=TokenizerSpec)
    tasks: frozenset[Task] = ALL_TASKS
    context_format: str = "interleaved"
    seed: int = 0
    shard_count: int = 1
    strict: bool = False
    templates: TemplateSet = DEFAULT_TEMPLATES

    def __post_init__(self):
        if self.input_uri and self.input_uri == self.output_uri:
            raise ConfigError("output must be distinct from input")
        if self.shard_count < 1:
            raise ConfigError("shard_count must be >= 1")
        if self.context_format not in CONTEXT_FORMATS:
            raise ConfigError(
                f"context_format must be one of {CONTEXT_FORMATS}, got {self.context_format!r}"
            )


def load_config_file(path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config file {path}: {exc}") from exc


def _build_section(cls, values: Mapping[str, Any], overrides: Mapping[str, Any], name: str):
    allowed = {f.name for f in fields(cls)}
    merged: dict[str, Any] = {}
    for source in (values, overrides):
        for key, value in source.items():
            if value is None:
                continue
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            merged[key] = value
    try:
        return cls(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] configuration: {exc}") from exc


def parse_tasks(raw) -> frozenset[Task]:
    if isinstance(raw, str):
        raw = [part.strip() for part in raw.split(",") if part.strip()]
    try:
        return frozenset(Task(name) for name in raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_config(
    file_values: Mapping[str, Any] | None = None,
    **flags: Any,
) -> PipelineConfig:
    """Merge config-file values with flag overrides into a PipelineConfig.

    ``flags`` entries set to None are treated as unset.  Nested flag names use
    the section dataclass field names directly (e.g. ``t_tok``).
    """
    file_values = dict(file_values or {})

    def pick(name: str, default: Any) -> Any:
        if flags.get(name) is not None:
            return flags[name]
        return file_values.get(name, default)

    packer = _build_section(
        PackerConfig,
        file_values.get("packer", {}),
        {k: flags.get(k) for k in ("t_img", "t_tok", "max_subsamples", "buffer_cap", "match_policy")},
        "packer",
    )
    tiles = _build_section(
        TileConfig,
        file_values.get("tiles", {}),
        {
            "tile_resolution_px": flags.get("tile_resolution_px"),
            "max_tiles": flags.get("max_tiles"),
            "tokens_per_tile": flags.get("tokens_per_tile"),
            "use_thumbnail": flags.get("use_thumbnail"),
        },
        "tiles",
    )

    tok_values = dict(file_values.get("tokenizer", {}))
    if flags.get("tokenizer_kind") is not None:
        tok_values["kind"] = flags["tokenizer_kind"]
    if flags.get("tokenizer_command") is not None:
        tok_values["external_vocab_uri"] = flags["tokenizer_command"]
    try:
        tokenizer = TokenizerSpec(
            kind=TokenizerKind(tok_values.get("kind", "reference")),
            external_vocab_uri=tok_values.get("external_vocab_uri"),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid [tokenizer] configuration: {exc}") from exc

    tasks_raw = pick("tasks", None)
    tasks = ALL_TASKS if tasks_raw is None else parse_tasks(tasks_raw)

    templates = DEFAULT_TEMPLATES
    overrides = file_values.get("templates", {})
    if overrides:
        try:
            templates = templates.with_overrides(overrides)
        except ValueError as exc:
            raise ConfigError(f"invalid [templates] configuration: {exc}") from exc

    return PipelineConfig(
        input_uri=str(pick("input", "")),
        output_uri=str(pick("output", "")),
        packer=packer,
        tiles=tiles,
        tokenizer=tokenizer,
        tasks=tasks,
        context_format=str(pick("context_format", "interleaved")),
        seed=int(pick("seed", 0)),
        shard_count=int(pick("shard_count", 1)),
        strict=bool(pick("strict", False)),
        templates=templates,
    )
