"""Model checkpoints.

Layout of a checkpoint file::

    8 bytes   magic b"MODNET01"
    4 bytes   header length n, uint32 little-endian
    n bytes   UTF-8 JSON header
    rest      float32 little-endian payload, tensors row-major in manifest order

The header holds ``format_version``, ``dims`` ([D, H, W]), ``answers`` (the
answer vocabulary without ``<other>``), ``words`` (embedding vocabulary),
``config`` (the full run configuration) and ``tensors`` (a list of
``{"name", "shape"}`` entries). Serialization is canonical (sorted keys, no
whitespace), so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DimensionMismatch
from .encoders import EmbeddingTable
from .model import AnswerVocab, RunConfig, VqaModel

MAGIC = b"MODNET01"
FORMAT_VERSION = 1
_LEN = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


class CheckpointDimsError(CheckpointError, DimensionMismatch):
    """The checkpoint was trained on feature grids of another shape."""


def checkpoint_bytes(model: VqaModel) -> bytes:
    manifest = []
    chunks = []
    for name, t in model.params.items():
        manifest.append({"name": name, "shape": list(t.shape)})
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "dims": list(model.dims),
        "answers": model.answers.answers,
        "words": model.words.tokens,
        "config": model.config.to_dict(),
        "tensors": manifest,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return MAGIC + _LEN.pack(len(raw)) + raw + b"".join(chunks)


def save_checkpoint(model: VqaModel, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def read_header(blob: bytes) -> tuple[dict, int]:
    """Parse and validate the header; returns it with the payload offset."""
    if len(blob) < len(MAGIC) + _LEN.size:
        raise CheckpointError("truncated checkpoint: missing header")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    (n,) = _LEN.unpack_from(blob, len(MAGIC))
    start = len(MAGIC) + _LEN.size
    if len(blob) < start + n:
        raise CheckpointError("truncated checkpoint: header cut short")
    try:
        header = json.loads(blob[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header.get('format_version')!r}")
    for key in ("dims", "answers", "words", "config", "tensors"):
        if key not in header:
            raise CheckpointError(f"checkpoint header lacks {key!r}")
    return header, start + n


def model_from_bytes(blob: bytes, expect_dims: Sequence[int] | None = None) -> VqaModel:
    header, offset = read_header(blob)
    dims = tuple(header["dims"])
    if expect_dims is not None and tuple(expect_dims) != dims:
        raise CheckpointDimsError(f"checkpoint dims {dims} do not match data dims {tuple(expect_dims)}")
    sizes = [int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"]]
    expected = offset + 4 * sum(sizes)
    if len(blob) != expected:
        raise CheckpointError(f"payload length mismatch: file has {len(blob)} bytes, manifest needs {expected}")
    try:
        config = RunConfig.from_dict(header["config"])
        model = VqaModel(config, AnswerVocab(header["answers"]), EmbeddingTable(header["words"]),
                         dims, init=False)
    except ValueError as e:
        raise CheckpointError(f"invalid checkpoint header: {e}") from e
    payload = np.frombuffer(blob, dtype="<f4", offset=offset)
    pos = 0
    for entry, size in zip(header["tensors"], sizes):
        value = payload[pos:pos + size].astype(np.float64).reshape(entry["shape"])
        model.params.add(entry["name"], value)
        pos += size
    return model


def load_checkpoint(path: str | Path, expect_dims: Sequence[int] | None = None) -> VqaModel:
    return model_from_bytes(Path(path).read_bytes(), expect_dims)
