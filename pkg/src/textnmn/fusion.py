"""Answer heads that fuse module-network scores with question and caption context."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .modules import ParameterStore
from .tensor import Tensor


# Starting value of the question projection bias. The fused sum passes through a
# relu; starting it at zero lets the first few updates push every coordinate
# negative, after which nothing upstream of the head receives gradient.
QUESTION_BIAS_INIT = 1.0


@dataclass
class AttentionResult:
    a: Tensor          # (N,) weights over caption positions
    c_hat: Tensor      # (d_emb,) attended caption vector
    H: Tensor          # (N, k) interaction rows; column i of the k x N matrix is row i here


def init_head(params: ParameterStore, n_labels: int) -> None:
    params.glorot("fusion/W", (n_labels, n_labels))
    params.zeros("fusion/b", (n_labels,))


def init_caption_attention(params: ParameterStore, n_labels: int, d_emb: int, k: int = 200) -> None:
    params.glorot("fusion/W_Q", (k, n_labels))
    params.glorot("fusion/W_C", (k, d_emb))
    params.glorot("fusion/W_h", (k,))
    params.glorot("fusion/proj_attn/W", (n_labels, d_emb))
    params.zeros("fusion/proj_attn/b", (n_labels,))


def init_kb_seed(params: ParameterStore, kb_dim: int, hidden: int) -> None:
    params.glorot("kb/seed_proj", (hidden, kb_dim))
    params.zeros("kb/seed_bias", (hidden,))


def _check_dims(**vectors: Tensor | None) -> None:
    sizes = {k: v.shape for k, v in vectors.items() if v is not None}
    if len(set(sizes.values())) > 1:
        raise ValueError("head inputs disagree in dimension: " +
                         ", ".join(f"{k}={s}" for k, s in sizes.items()))


def _fused_softmax(terms: Sequence[Tensor], params: ParameterStore) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = T.add(acc, t)
    logits = T.matvec(params["fusion/W"], T.relu(acc), params["fusion/b"])
    return T.softmax(logits)


def caption_info_head(pred_nmn: Tensor, m_q: Tensor, m_c: Tensor | None,
                      params: ParameterStore) -> Tensor:
    """softmax(W relu((pred_nmn + m_Q) + m_C) + b).

    With ``m_c=None`` this is the plain module-network head.
    """
    _check_dims(pred_nmn=pred_nmn, m_q=m_q, m_c=m_c)
    terms = [pred_nmn, m_q] + ([m_c] if m_c is not None else [])
    return _fused_softmax(terms, params)


def nmn_head(pred_nmn: Tensor, m_q: Tensor, params: ParameterStore) -> Tensor:
    return caption_info_head(pred_nmn, m_q, None, params)


def caption_attention(m_q: Tensor, captions: Tensor, mask: Sequence[bool],
                      params: ParameterStore) -> AttentionResult:
    """Question-guided soft attention over caption word embeddings.

    h_i = sigmoid(W_Q m_Q) * sigmoid(W_C c_i); scores_i = W_h . h_i;
    a = masked softmax of the scores; c_hat = sum_i a_i c_i.
    """
    mask = np.asarray(mask, dtype=bool)
    if captions.data.ndim != 2 or captions.shape[0] != mask.size:
        raise ValueError(f"caption matrix {captions.shape} does not match mask of length {mask.size}")
    if not mask.any():
        raise ValueError("caption attention: every caption position is masked")
    q = T.sigmoid(T.matvec(params["fusion/W_Q"], m_q))
    per_word = T.sigmoid(T.matmul(captions, T.transpose(params["fusion/W_C"])))
    H = T.mul_rows(per_word, q)
    a = T.masked_softmax(T.matvec(H, params["fusion/W_h"]), mask)
    c_hat = T.matvec(T.transpose(captions), a)
    return AttentionResult(a=a, c_hat=c_hat, H=H)


def caption_attn_head(pred_nmn: Tensor, m_q: Tensor, attn: AttentionResult,
                      params: ParameterStore) -> Tensor:
    """softmax(W relu((pred_nmn + m_Q) + P c_hat) + b) with P lifting c_hat to label space."""
    lifted = T.matvec(params["fusion/proj_attn/W"], attn.c_hat, params["fusion/proj_attn/b"])
    _check_dims(pred_nmn=pred_nmn, m_q=m_q, c_hat=lifted)
    return _fused_softmax([pred_nmn, m_q, lifted], params)


def caption_only_head(m_q: Tensor, caption: Tensor | AttentionResult,
                      params: ParameterStore) -> Tensor:
    """The caption head of the matching kind with the module-network scores zeroed."""
    zero = Tensor(np.zeros(m_q.shape))
    if isinstance(caption, AttentionResult):
        return caption_attn_head(zero, m_q, caption, params)
    return caption_info_head(zero, m_q, caption, params)


def kb_seed(kb_vector, params: ParameterStore) -> Tensor:
    """Initial question-LSTM hidden state tanh(W_seed v + b_seed)."""
    w = params["kb/seed_proj"]
    v = T.as_tensor(kb_vector)
    if v.shape != (w.shape[1],):
        raise ValueError(f"kb vector has shape {v.shape}, expected ({w.shape[1]},)")
    return T.tanh(T.matvec(w, v, params["kb/seed_bias"]))


def predict_answer(dist, vocab: Sequence[str]) -> str:
    """Token at the highest probability; ties go to the lowest index."""
    p = dist.data if isinstance(dist, Tensor) else np.asarray(dist)
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    return vocab[int(np.argmax(p))]
