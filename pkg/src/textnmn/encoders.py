"""Word embeddings, the LSTM sequence encoder, and context projections."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .modules import ParameterStore
from .tensor import Tensor

PAD = "<pad>"
UNK = "<unk>"
GATES = ("input", "forget", "output", "candidate")


@dataclass
class EmbeddingTable:
    """Token -> row index over an embedding matrix kept in a ParameterStore.

    Row 0 is ``<pad>`` (all zeros), row 1 is ``<unk>``.
    """

    tokens: list[str]
    param: str = "embed/words"

    def __post_init__(self):
        if self.tokens[:2] != [PAD, UNK]:
            raise ValueError("the first two tokens must be <pad> and <unk>")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in embedding vocabulary")

    def __len__(self):
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index.get(token, 1)

    @classmethod
    def from_corpus(cls, sentences: Iterable[Sequence[str]]) -> "EmbeddingTable":
        words = sorted({w for s in sentences for w in s} - {PAD, UNK})
        return cls([PAD, UNK] + words)


def init_embeddings(table: EmbeddingTable, params: ParameterStore, dim: int,
                    pretrained: dict[str, np.ndarray] | None = None) -> Tensor:
    s = np.sqrt(6.0 / (len(table) + dim))
    value = params.rng.uniform(-s, s, size=(len(table), dim))
    if pretrained:
        for tok, vec in pretrained.items():
            if tok in table.index:
                if len(vec) != dim:
                    raise ValueError(f"embedding for {tok!r} has dimension {len(vec)}, expected {dim}")
                value[table.index[tok]] = vec
    value[0] = 0.0
    return params.add(table.param, value)


def load_embedding_file(path: str | Path) -> dict[str, np.ndarray]:
    """Read ``token v1 v2 ... vd`` lines (UTF-8); all rows must share d."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            vec = np.array([float(x) for x in parts[1:]])
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(f"{path}:{lineno}: dimension {vec.size}, expected {dim}")
            vectors[parts[0]] = vec
    if not vectors:
        raise ValueError(f"{path}: no embeddings found")
    return vectors


def write_embedding_file(path: str | Path, vectors: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, vec in vectors.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def embed_tokens(tokens: Sequence[str], table: EmbeddingTable, params: ParameterStore,
                 max_len: int) -> tuple[Tensor, np.ndarray]:
    """(max_len, d_emb) matrix of embeddings and a mask of real positions.

    Long sequences are truncated; short ones padded with ``<pad>`` rows.
    An empty sequence becomes a single ``<unk>``.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = [table.lookup(t) for t in tokens][:max_len] or [1]
    mask = np.zeros(max_len, dtype=bool)
    mask[: len(ids)] = True
    ids = ids + [0] * (max_len - len(ids))
    return T.take(params[table.param], ids), mask


def init_lstm(params: ParameterStore, which: str, input_dim: int, hidden: int) -> None:
    for gate in GATES:
        params.glorot(f"lstm/{which}/{gate}", (hidden, input_dim + hidden + 1), bias_column=True)


def lstm_hidden_size(params: ParameterStore, which: str) -> int:
    return params[f"lstm/{which}/input"].shape[0]


_ONE = np.ones(1)


def lstm_encode(embedded: Tensor, mask: Sequence[bool], params: ParameterStore, which: str,
                h0: Tensor | None = None) -> Tensor:
    """Run a single-layer LSTM over the unmasked rows; return the last hidden state.

    The initial hidden state is ``h0`` (zeros if absent); the cell starts at 0.
    """
    hidden = lstm_hidden_size(params, which)
    w = {g: params[f"lstm/{which}/{g}"] for g in GATES}
    input_dim = w["input"].shape[1] - hidden - 1
    if embedded.data.ndim != 2 or embedded.shape[1] != input_dim:
        raise ValueError(f"lstm/{which}: expected rows of width {input_dim}, got {embedded.shape}")
    if h0 is not None and h0.shape != (hidden,):
        raise ValueError(f"lstm/{which}: h0 has shape {h0.shape}, expected ({hidden},)")
    h = h0 if h0 is not None else Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    for t, real in enumerate(mask):
        if not real:
            continue
        z = T.concat([T.take(embedded, t), h, _ONE])
        i = T.sigmoid(T.matvec(w["input"], z))
        f = T.sigmoid(T.matvec(w["forget"], z))
        o = T.sigmoid(T.matvec(w["output"], z))
        g = T.tanh(T.matvec(w["candidate"], z))
        c = T.add(T.mul(f, c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
    return h


def init_projection(params: ParameterStore, role: str, hidden: int, out_dim: int,
                    bias: float = 0.0) -> None:
    params.glorot(f"fusion/proj_{role}/W", (out_dim, hidden))
    params.add(f"fusion/proj_{role}/b", np.full(out_dim, bias))


def project_context(hidden: Tensor, params: ParameterStore, role: str) -> Tensor:
    """m = W_proj h + b_proj for role ``question`` or ``caption``."""
    return T.matvec(params[f"fusion/proj_{role}/W"], hidden, params[f"fusion/proj_{role}/b"])
