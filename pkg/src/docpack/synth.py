"""Seeded synthetic sample streams for benchmarking and stress tests.

The real corpus is not needed to exercise the packer: streams are drawn from
a configurable length distribution (uniform, log-normal or bimodal), with an
optional share of image-bearing samples.  Identical (spec, seed) pairs always
produce identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .packer import Atom, AtomKind, Role, Sample

DISTRIBUTIONS = ("uniform", "lognormal", "bimodal")

# Text atoms alternate through the roles so packed output exercises all spans.
_ROLE_CYCLE = (Role.CONTEXT, Role.QUESTION, Role.ANSWER)


@dataclass(frozen=True)
class DistributionSpec:
    """Shape of a synthetic stream.

    ``atom_tokens`` caps the size of individual text atoms; token totals are
    split into atoms of that size (plus one remainder atom), so truncation can
    cut at fine boundaries when the cap is small.
    """

    kind: str = "lognormal"
    n_samples: int = 1000
    min_tokens: int = 1024
    max_tokens: int = 16384
    image_prob: float = 0.0
    max_images: int = 8
    tokens_per_image: int = 256
    atom_tokens: int = 4096

    def __post_init__(self):
        if self.kind not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.kind!r}; expected one of {DISTRIBUTIONS}")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        if not 0.0 <= self.image_prob <= 1.0:
            raise ValueError("image_prob must be in [0, 1]")
        if self.max_images < 1 or self.tokens_per_image < 1 or self.atom_tokens < 1:
            raise ValueError("max_images, tokens_per_image and atom_tokens must be >= 1")


def _draw_length(spec: DistributionSpec, rng: np.random.Generator) -> int:
    lo, hi = spec.min_tokens, spec.max_tokens
    if spec.kind == "uniform":
        return int(rng.integers(lo, hi + 1))
    if spec.kind == "lognormal":
        mid = np.log((lo + hi) / 2.0)
        value = rng.lognormal(mean=mid, sigma=0.6)
        return int(min(max(round(value), lo), hi))
    # bimodal: short and long samples in a 70/30 mix
    span = hi - lo
    if rng.random() < 0.7:
        value = rng.normal(lo + 0.15 * span, 0.05 * span + 1.0)
    else:
        value = rng.normal(lo + 0.85 * span, 0.05 * span + 1.0)
    return int(min(max(round(value), lo), hi))


def synthesize_stream(spec: DistributionSpec, seed: int) -> Iterator[Sample]:
    """Yield ``spec.n_samples`` deterministic samples for the given seed."""
    rng = np.random.default_rng(seed)
    for index in range(spec.n_samples):
        sid = f"synth-{seed}-{index:06d}"
        target = _draw_length(spec, rng)
        atoms: list[Atom] = []
        if spec.image_prob > 0.0 and rng.random() < spec.image_prob:
            n_images = int(rng.integers(1, spec.max_images + 1))
            for _ in range(n_images):
                atoms.append(
                    Atom(AtomKind.IMAGE, spec.tokens_per_image, Role.CONTEXT, sid)
                )
        remaining = target
        piece = 0
        while remaining > 0:
            size = min(spec.atom_tokens, remaining)
            role = _ROLE_CYCLE[piece % len(_ROLE_CYCLE)]
            atoms.append(Atom(AtomKind.TEXT, size, role, sid))
            remaining -= size
            piece += 1
        yield Sample(sid, tuple(atoms))
