"""Abstract corpus ingestion, BM25 retrieval, and document vectors for seeding.

Index file layout (all integers little-endian)::

    8 bytes   magic  b"KBIDX001"
    4 bytes   uint32 header length L
    L bytes   UTF-8 JSON header:
                version, k1, b, dim, n_docs, avgdl, titles, doc_lengths,
                terms: {term: [offset, count]}   # offset in postings records
    n_post*8  postings: (int32 doc_id, int32 tf) records, terms in sorted order,
              doc ids ascending within a term
    n_docs*dim*8  doc vectors, float64, row-major
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .wordlists import CLOSED_CLASS, COMMON_NOUNS, STOPWORDS, VERBS

log = logging.getLogger(__name__)

INDEX_MAGIC = b"KBIDX001"
INDEX_VERSION = 1
K1 = 1.2
B = 0.75

_WORD = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empties."""
    return _WORD.findall(text.lower())


@dataclass(frozen=True)
class AbstractDoc:
    doc_id: int
    title: str
    text: str
    token_count: int


def is_noun_title(title: str) -> bool:
    words = _WORD.findall(title)
    if not words:
        return False
    return all(w[0].isupper() or w.lower() in COMMON_NOUNS for w in words)


def filter_abstracts(lines: Iterable[str]) -> tuple[list[AbstractDoc], int, int]:
    """Parse ``title<TAB>text`` lines; returns (kept docs, dropped, malformed)."""
    docs: list[AbstractDoc] = []
    dropped = malformed = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0].strip():
            log.warning("abstracts line %d malformed, skipped", lineno)
            malformed += 1
            continue
        title, text = parts[0].strip(), parts[1]
        if not is_noun_title(title):
            dropped += 1
            continue
        docs.append(AbstractDoc(len(docs), title, text, len(tokenize(text))))
    return docs, dropped, malformed


def ingest_abstracts(path: str | Path) -> list[AbstractDoc]:
    with open(path, encoding="utf-8") as fh:
        docs, dropped, malformed = filter_abstracts(fh)
    log.info("kept %d abstracts, dropped %d non-noun titles, skipped %d malformed lines",
             len(docs), dropped, malformed)
    if not docs:
        raise ValueError(f"{path}: no abstracts survived the noun-title filter")
    return docs


def extract_query_nouns(question_tokens: Sequence[str]) -> list[str]:
    """Content words of a question: stopwords, closed-class words and verbs removed."""
    out: list[str] = []
    for tok in question_tokens:
        for w in tokenize(tok):
            if w in STOPWORDS or w in CLOSED_CLASS or w in VERBS or w in out:
                continue
            out.append(w)
    return out


def hashed_vector(token: str, dim: int = 300) -> np.ndarray:
    """Deterministic pseudo-random embedding keyed by the token's bytes."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(dim) / math.sqrt(dim)


def doc_vector(tokens: Sequence[str], embed: Callable[[str], np.ndarray | None],
               idf: Callable[[str], float], dim: int = 300) -> np.ndarray:
    """idf-weighted mean of token embeddings, scaled to unit length (zero if none embed)."""
    total = np.zeros(dim)
    weight = 0.0
    for tok in tokens:
        vec = embed(tok)
        if vec is None:
            continue
        w = idf(tok)
        total += w * np.asarray(vec, dtype=np.float64)
        weight += w
    if weight == 0.0:
        return np.zeros(dim)
    mean = total / weight
    norm = np.linalg.norm(mean)
    return mean / norm if norm > 0 else np.zeros(dim)


def bm25_idf(n_docs: int, df: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def bm25_term(tf: int, doc_len: int, avgdl: float, idf: float, k1: float = K1, b: float = B) -> float:
    return idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc_len / avgdl))


class IndexFormatError(ValueError):
    pass


class KbIndex:
    """Inverted index with BM25 ranking and one vector per document."""

    def __init__(self, postings: dict[str, list[tuple[int, int]]], doc_lengths: list[int],
                 titles: list[str], vectors: np.ndarray, k1: float = K1, b: float = B):
        self.postings = postings
        self.doc_lengths = list(doc_lengths)
        self.titles = list(titles)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.k1 = k1
        self.b = b
        self.n_docs = len(self.doc_lengths)
        self.avgdl = (sum(self.doc_lengths) / self.n_docs) if self.n_docs else 0.0

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def idf(self, term: str) -> float:
        return bm25_idf(self.n_docs, len(self.postings.get(term, ())))

    @classmethod
    def build(cls, docs: Sequence[AbstractDoc], embeddings: Mapping[str, np.ndarray] | None = None,
              dim: int = 300) -> "KbIndex":
        """Index ``docs``; vectors come from ``embeddings`` or, when absent, token hashes.

        With ``embeddings`` the vector size is theirs and ``dim`` is ignored.
        """
        if embeddings:
            dim = len(next(iter(embeddings.values())))
        docs = sorted(docs, key=lambda d: d.doc_id)
        if [d.doc_id for d in docs] != list(range(len(docs))):
            raise ValueError("doc ids must be dense and start at 0")
        postings: dict[str, list[tuple[int, int]]] = {}
        lengths = []
        token_lists = []
        for doc in docs:
            toks = tokenize(doc.text)
            token_lists.append(toks)
            lengths.append(len(toks))
            for term, tf in sorted(Counter(toks).items()):
                postings.setdefault(term, []).append((doc.doc_id, tf))
        postings = dict(sorted(postings.items()))
        index = cls(postings, lengths, [d.title for d in docs], np.zeros((len(docs), dim)))
        if embeddings is None:
            embed = lambda t: hashed_vector(t, dim)  # noqa: E731
        else:
            embed = embeddings.get
        index.vectors = np.array([doc_vector(t, embed, index.idf, dim) for t in token_lists]).reshape(len(docs), dim)
        return index

    def score_all(self, terms: Sequence[str]) -> dict[int, float]:
        scores: dict[int, float] = {}
        for term in dict.fromkeys(terms):
            plist = self.postings.get(term)
            if not plist:
                continue
            idf = self.idf(term)
            for doc_id, tf in plist:
                scores[doc_id] = scores.get(doc_id, 0.0) + bm25_term(
                    tf, self.doc_lengths[doc_id], self.avgdl, idf, self.k1, self.b)
        return scores

    def search(self, terms: Sequence[str], k: int) -> list[tuple[int, float]]:
        return search(self, terms, k)

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        records = bytearray()
        offsets = {}
        count = 0
        for term, plist in self.postings.items():
            offsets[term] = [count, len(plist)]
            for doc_id, tf in plist:
                records += struct.pack("<ii", doc_id, tf)
            count += len(plist)
        header = {
            "version": INDEX_VERSION, "k1": self.k1, "b": self.b, "dim": self.dim,
            "n_docs": self.n_docs, "avgdl": self.avgdl, "titles": self.titles,
            "doc_lengths": self.doc_lengths, "terms": offsets,
        }
        blob = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(bytes(records))
            fh.write(self.vectors.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "KbIndex":
        raw = Path(path).read_bytes()
        if raw[:8] != INDEX_MAGIC:
            raise IndexFormatError(f"{path}: not a knowledge index (bad magic)")
        if len(raw) < 12:
            raise IndexFormatError(f"{path}: truncated index header")
        (hlen,) = struct.unpack("<I", raw[8:12])
        try:
            header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise IndexFormatError(f"{path}: corrupt index header") from e
        if not isinstance(header, dict) or header.get("version") != INDEX_VERSION:
            version = header.get("version") if isinstance(header, dict) else None
            raise IndexFormatError(f"{path}: unsupported index version {version}")
        missing = {"k1", "b", "dim", "n_docs", "titles", "doc_lengths", "terms"} - header.keys()
        if missing:
            raise IndexFormatError(f"{path}: index header lacks {sorted(missing)}")
        n_post = sum(c for _, c in header["terms"].values())
        body = raw[12 + hlen:]
        need = n_post * 8 + header["n_docs"] * header["dim"] * 8
        if len(body) != need:
            raise IndexFormatError(f"{path}: payload is {len(body)} bytes, expected {need}")
        pairs = np.frombuffer(body[: n_post * 8], dtype="<i4").reshape(n_post, 2)
        postings = {
            term: [(int(d), int(f)) for d, f in pairs[off:off + cnt]]
            for term, (off, cnt) in header["terms"].items()
        }
        vectors = np.frombuffer(body[n_post * 8:], dtype="<f8").reshape(header["n_docs"], header["dim"])
        return cls(postings, header["doc_lengths"], header["titles"], vectors.copy(),
                   k1=header["k1"], b=header["b"])


def search(index: KbIndex, terms: Sequence[str], k: int) -> list[tuple[int, float]]:
    """Top-k (doc_id, BM25 score), best first; ties go to the lower doc id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not terms:
        return []
    scores = index.score_all(terms)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def kb_vector_for_question(question_tokens: Sequence[str], index: KbIndex, k: int = 3) -> np.ndarray:
    """Mean vector of the top-k documents retrieved for the question's nouns."""
    hits = search(index, extract_query_nouns(question_tokens), k)
    if not hits:
        return np.zeros(index.dim)
    return np.mean([index.vectors[d] for d, _ in hits], axis=0)
