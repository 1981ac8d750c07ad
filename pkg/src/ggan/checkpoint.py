"""Versioned binary checkpoint container.

Layout, all integers little-endian:

    bytes 0-3   magic "GGAN"
    bytes 4-7   u32 format version
    bytes 8-15  u64 header length in bytes
    header      UTF-8 JSON: {"kind": ..., "meta": {...},
                 "arrays": [{"name": ..., "shape": [...]}, ...]}
    payload     float64 little-endian array data, concatenated in
                 header order

The header JSON is serialized with sorted keys and no whitespace, so a
given logical state always produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CheckpointError
from . import nn

MAGIC = b"GGAN"
FORMAT_VERSION = 1


def write_container(
    path: str | Path, kind: str, meta: Mapping, arrays: Mapping[str, np.ndarray]
) -> None:
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_container(path: str | Path, expect_kind: str | None = None) -> tuple[dict, dict]:
    """Returns (meta, arrays). Raises CheckpointError on any corruption."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a GGAN checkpoint (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if 16 + header_len > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupted header: {exc}") from exc
    for key in ("kind", "meta", "arrays"):
        if key not in header:
            raise CheckpointError(f"{path}: corrupted header: missing {key!r}")
    if expect_kind is not None and header["kind"] != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {header['kind']!r}, expected {expect_kind!r}"
        )
    expected_payload = sum(
        int(np.prod(e["shape"], dtype=np.int64)) * 8 for e in header["arrays"]
    )
    payload = raw[16 + header_len :]
    if len(payload) != expected_payload:
        raise CheckpointError(
            f"{path}: corrupted payload, expected {expected_payload} bytes, got {len(payload)}"
        )
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays[entry["name"]] = data.reshape(shape).astype(np.float64)
        offset += count * 8
    return header["meta"], arrays


def save_parameter_set(
    path: str | Path, spec: nn.NetworkSpec, params: Mapping[str, np.ndarray]
) -> None:
    """Persist one network's parameters with its spec echoed alongside."""
    meta = {"spec": nn.network_to_dict(spec)}
    write_container(path, kind="ggan.parameter_set", meta=meta, arrays=dict(params))


def load_parameter_set(
    path: str | Path, expected_spec: nn.NetworkSpec | None = None
) -> tuple[nn.NetworkSpec, dict[str, np.ndarray]]:
    """Load a parameter set; refuses to load against a different spec."""
    meta, arrays = read_container(path, expect_kind="ggan.parameter_set")
    spec = nn.network_from_dict(meta["spec"])
    if expected_spec is not None and not nn.specs_equal(spec, expected_spec):
        raise CheckpointError(f"{path}: stored network spec differs from the expected one")
    wanted = nn.param_shapes(spec)
    if set(arrays) != set(wanted) or any(arrays[k].shape != wanted[k] for k in wanted):
        raise CheckpointError(f"{path}: stored parameters do not match the stored spec")
    return spec, arrays
