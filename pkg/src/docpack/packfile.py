"""Codecs for packed dataset files.

The binary format is a small little-endian container: a file header with the
packing thresholds, then one record per packed sequence.  Each record carries
a header (byte length, token/image/pad counts, sub-sample count), the derived
per-token arrays (segment ids, positions, role labels) and the payload atom
descriptors per sub-sample.  A JSON-lines debug rendering with identical
field names is available for inspection; atom text content is not persisted
in either form.
"""

from __future__ import annotations

import json
import struct
from typing import Any, BinaryIO, Iterable, Mapping

from .packer import Atom, AtomKind, PackedSample, Role, SubSample

MAGIC = b"DPKF"
FORMAT_VERSION = 1

_FILE_HEADER = struct.Struct("<4sHII")  # magic, version, t_tok, t_img
_RECORD_HEADER = struct.Struct("<IIIII")  # byte_length, n_tokens, n_images, pad, k
_SUB_HEADER = struct.Struct("<HI")  # source id byte length, atom count
_ATOM = struct.Struct("<BBI")  # kind, role, token_length

_KIND_CODES = {AtomKind.TEXT: 0, AtomKind.IMAGE: 1}
_KINDS = {code: kind for kind, code in _KIND_CODES.items()}
_ROLE_WIRE = {Role.CONTEXT: 0, Role.QUESTION: 1, Role.ANSWER: 2}
_ROLES = {code: role for role, code in _ROLE_WIRE.items()}


def _record_bytes(p: PackedSample) -> bytes:
    chunks = [
        p.segment_ids.astype("<i4").tobytes(),
        p.positions.astype("<i4").tobytes(),
        p.role_labels.astype("u1").tobytes(),
    ]
    for sub in p.subsamples:
        sid = sub.source_sample_id.encode("utf-8")
        chunks.append(_SUB_HEADER.pack(len(sid), len(sub.atoms)))
        chunks.append(sid)
        for atom in sub.atoms:
            chunks.append(_ATOM.pack(_KIND_CODES[atom.kind], _ROLE_WIRE[atom.role], atom.token_length))
    return b"".join(chunks)


def write_records(fh: BinaryIO, packed: Iterable[PackedSample], t_tok: int, t_img: int) -> int:
    """Write a full packed file (header plus records); returns the record count."""
    fh.write(_FILE_HEADER.pack(MAGIC, FORMAT_VERSION, t_tok, t_img))
    count = 0
    for p in packed:
        body = _record_bytes(p)
        fh.write(_RECORD_HEADER.pack(len(body), p.n_tokens, p.n_images, p.pad_tokens, len(p.subsamples)))
        fh.write(body)
        count += 1
    return count


def write_packfile(path, packed: Iterable[PackedSample], t_tok: int, t_img: int) -> int:
    with open(path, "wb") as fh:
        return write_records(fh, packed, t_tok, t_img)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated packed file")
    return data


def read_packfile(path) -> tuple[dict[str, int], list[PackedSample]]:
    """Read a packed file back; returns (thresholds, records).

    Atom content is not stored on disk, so reconstructed atoms carry
    ``content=None``; every other field round-trips exactly.
    """
    records: list[PackedSample] = []
    with open(path, "rb") as fh:
        magic, version, t_tok, t_img = _FILE_HEADER.unpack(_read_exact(fh, _FILE_HEADER.size))
        if magic != MAGIC:
            raise ValueError(f"not a packed file (magic {magic!r})")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported packed file version {version}")
        while True:
            header = fh.read(_RECORD_HEADER.size)
            if not header:
                break
            if len(header) != _RECORD_HEADER.size:
                raise ValueError("truncated packed file")
            byte_length, n_tokens, n_images, pad_tokens, k = _RECORD_HEADER.unpack(header)
            body = _read_exact(fh, byte_length)
            physical = n_tokens + pad_tokens
            offset = physical * 4 * 2 + physical  # segment_ids + positions + roles
            subsamples = []
            for _ in range(k):
                sid_len, n_atoms = _SUB_HEADER.unpack_from(body, offset)
                offset += _SUB_HEADER.size
                sid = body[offset : offset + sid_len].decode("utf-8")
                offset += sid_len
                atoms = []
                for _ in range(n_atoms):
                    kind, role, token_length = _ATOM.unpack_from(body, offset)
                    offset += _ATOM.size
                    atoms.append(Atom(_KINDS[kind], token_length, _ROLES[role], sid))
                subsamples.append(SubSample(sid, tuple(atoms)))
            records.append(
                PackedSample(
                    subsamples=tuple(subsamples),
                    n_tokens=n_tokens,
                    n_images=n_images,
                    pad_tokens=pad_tokens,
                )
            )
    return {"t_tok": t_tok, "t_img": t_img}, records


def packed_to_record(p: PackedSample) -> dict[str, Any]:
    """The JSON-lines debug shape; field names match the binary layout."""
    return {
        "n_tokens": p.n_tokens,
        "n_images": p.n_images,
        "pad_tokens": p.pad_tokens,
        "n_subsamples": len(p.subsamples),
        "segment_ids": p.segment_ids.tolist(),
        "positions": p.positions.tolist(),
        "role_labels": p.role_labels.tolist(),
        "subsamples": [
            {
                "source_sample_id": sub.source_sample_id,
                "atoms": [
                    {
                        "kind": atom.kind.value,
                        "role": atom.role.value,
                        "token_length": atom.token_length,
                    }
                    for atom in sub.atoms
                ],
            }
            for sub in p.subsamples
        ],
    }


def packed_from_record(record: Mapping[str, Any]) -> PackedSample:
    subsamples = tuple(
        SubSample(
            sub["source_sample_id"],
            tuple(
                Atom(
                    AtomKind(atom["kind"]),
                    int(atom["token_length"]),
                    Role(atom["role"]),
                    sub["source_sample_id"],
                )
                for atom in sub["atoms"]
            ),
        )
        for sub in record["subsamples"]
    )
    return PackedSample(
        subsamples=subsamples,
        n_tokens=int(record["n_tokens"]),
        n_images=int(record["n_images"]),
        pad_tokens=int(record["pad_tokens"]),
    )


def write_debug_jsonl(path, packed: Iterable[PackedSample]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in packed:
            fh.write(json.dumps(packed_to_record(p), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count
