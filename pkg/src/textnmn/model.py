"""Model variants: the module network plus question / caption / knowledge fusion."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import encoders as enc
from . import fusion
from . import modules as nmn
from .data import DimensionMismatch, Instance
from .layout import Layout, compile_from_parse, parse_layout_sexpr, type_check
from .tensor import Tensor

VARIANTS = ("nmn", "nmn+cap", "nmn+capattn", "nmn+kb", "cap-only")
OTHER = "<other>"


@dataclass
class RunConfig:
    model: str = "nmn"
    batch: int = 32
    epochs: int = 12
    patience: int = 1
    answers_k: int = 64
    d_emb: int = 64
    q_hidden: int = 128
    c_hidden: int = 64
    attn_k: int = 200
    measure_hidden: int = 256
    kb_topk: int = 3
    kb_dim: int = 300
    parse_mode: str = "short"
    measure_for: str = "none"
    metric: str = "exact"
    max_q_len: int = 20
    max_c_len: int = 20
    seed: int = 0
    data: str | None = None
    val: str | None = None
    embeddings: str | None = None
    abstracts: str | None = None
    index: str | None = None

    def __post_init__(self):
        if self.model not in VARIANTS:
            raise ValueError(f"unknown model variant {self.model!r}; choose from {VARIANTS}")
        if self.parse_mode not in ("short", "longest"):
            raise ValueError(f"unknown parse mode {self.parse_mode!r}")
        if self.measure_for not in ("none", "count", "yesno", "both"):
            raise ValueError(f"unknown measure policy {self.measure_for!r}")
        if self.metric not in ("exact", "consensus"):
            raise ValueError(f"unknown metric {self.metric!r}")
        for name in ("batch", "epochs", "patience", "answers_k", "d_emb", "q_hidden", "c_hidden",
                     "attn_k", "measure_hidden", "kb_topk", "kb_dim", "max_q_len", "max_c_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def majority_answer(answers: Sequence[str]) -> str:
    """Most frequent answer; ties go to the lexicographically smallest."""
    counts = Counter(answers)
    return min(counts, key=lambda a: (-counts[a], a))


class AnswerVocab:
    """Top-K answers plus a reserved ``<other>`` slot at index K."""

    def __init__(self, answers: Sequence[str]):
        if len(set(answers)) != len(answers):
            raise ValueError("duplicate answers in vocabulary")
        if OTHER in answers:
            raise ValueError(f"{OTHER} is reserved")
        self.answers = list(answers)
        self.index = {a: i for i, a in enumerate(self.answers)}

    @property
    def K(self) -> int:
        return len(self.answers)

    @property
    def labels(self) -> list[str]:
        return self.answers + [OTHER]

    def __len__(self):
        return len(self.answers) + 1

    def target(self, answers: Sequence[str]) -> int:
        return self.index.get(majority_answer(answers), self.K)

    def __eq__(self, other):
        return isinstance(other, AnswerVocab) and self.answers == other.answers


def build_answer_vocab(instances: Iterable[Instance], K: int) -> AnswerVocab:
    """Top-K answer strings over all human answers; ties by lexicographic order."""
    if K < 1:
        raise ValueError("K must be at least 1")
    counts = Counter(a for inst in instances for a in inst.answers)
    if not counts:
        raise ValueError("no answers to build a vocabulary from")
    ranked = sorted(counts, key=lambda a: (-counts[a], a))
    return AnswerVocab(ranked[:K])


def normalize_features(grid: np.ndarray) -> np.ndarray:
    """Zero mean, unit (population) standard deviation over the whole grid."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty feature grid")
    return (grid - grid.mean()) / max(grid.std(), 1e-8)


def _measure_flags(policy: str) -> tuple[bool, bool]:
    return policy in ("count", "both"), policy in ("yesno", "both")


class VqaModel:
    """One variant from ``VARIANTS`` with its parameters and vocabularies."""

    def __init__(self, config: RunConfig, answers: AnswerVocab, words: enc.EmbeddingTable,
                 dims: Sequence[int], pretrained: dict[str, np.ndarray] | None = None,
                 init: bool = True):
        self.config = config
        self.answers = answers
        self.words = words
        self.dims = tuple(int(d) for d in dims)
        self.params = nmn.ParameterStore(config.seed)
        self._layouts: dict[tuple, Layout] = {}
        if init:
            self._init_params(pretrained)

    @property
    def variant(self) -> str:
        return self.config.model

    @property
    def uses_nmn(self) -> bool:
        return self.variant != "cap-only"

    def _init_params(self, pretrained) -> None:
        c, p = self.config, self.params
        n_labels = len(self.answers)
        d, h, w = self.dims
        enc.init_embeddings(self.words, p, c.d_emb, pretrained)
        enc.init_lstm(p, "question", c.d_emb, c.q_hidden)
        enc.init_projection(p, "question", c.q_hidden, n_labels, fusion.QUESTION_BIAS_INIT)
        fusion.init_head(p, n_labels)
        if self.uses_nmn:
            nmn.init_module_params(p, d, (h, w), n_labels, c.measure_hidden)
        if self.variant == "nmn+cap":
            enc.init_lstm(p, "caption", c.d_emb, c.c_hidden)
            enc.init_projection(p, "caption", c.c_hidden, n_labels)
        if self.variant in ("nmn+capattn", "cap-only"):
            fusion.init_caption_attention(p, n_labels, c.d_emb, c.attn_k)
        if self.variant == "nmn+kb":
            fusion.init_kb_seed(p, c.kb_dim, c.q_hidden)

    # -- layouts ------------------------------------------------------------

    def layout_for(self, inst: Instance) -> Layout:
        key = (inst.id, tuple(inst.question), inst.layout)
        cached = self._layouts.get(key)
        if cached is not None:
            return cached
        if inst.layout:
            layout = parse_layout_sexpr(inst.layout)
        elif inst.dep_parse:
            counting, yesno = _measure_flags(self.config.measure_for)
            layout = compile_from_parse(inst.dep_parse, self.config.parse_mode, "auto",
                                        counting=counting, yesno=yesno)
        else:
            raise ValueError(f"instance {inst.id}: needs a layout or a dependency parse")
        type_check(layout)
        self._layouts[key] = layout
        return layout

    def register_words(self, instances: Iterable[Instance]) -> None:
        """Create Find weights for every layout word, in first-encounter order."""
        if not self.uses_nmn:
            return
        for inst in instances:
            for word in self.layout_for(inst).find_words():
                nmn.add_find_word(self.params, word, self.dims[0])

    # -- forward ------------------------------------------------------------

    def check(self, inst: Instance) -> None:
        if inst.dims != self.dims:
            raise DimensionMismatch(f"instance {inst.id}: features {inst.dims}, model expects {self.dims}")

    def question_context(self, inst: Instance, kb_vector=None) -> Tensor:
        c, p = self.config, self.params
        emb, mask = enc.embed_tokens(inst.question, self.words, p, c.max_q_len)
        h0 = None
        if self.variant == "nmn+kb":
            vec = np.zeros(c.kb_dim) if kb_vector is None else kb_vector
            h0 = fusion.kb_seed(vec, p)
        hidden = enc.lstm_encode(emb, mask, p, "question", h0)
        return enc.project_context(hidden, p, "question")

    def nmn_scores(self, inst: Instance) -> Tensor:
        return nmn.assemble_and_run(self.layout_for(inst), normalize_features(inst.features),
                                    self.params, checked=True)

    def caption_attention(self, inst: Instance, m_q: Tensor) -> fusion.AttentionResult:
        emb, mask = enc.embed_tokens(inst.caption, self.words, self.params, self.config.max_c_len)
        return fusion.caption_attention(m_q, emb, mask, self.params)

    def forward(self, inst: Instance, kb_vector=None) -> Tensor:
        """Answer distribution for one instance."""
        self.check(inst)
        p = self.params
        m_q = self.question_context(inst, kb_vector)
        if self.variant == "cap-only":
            return fusion.caption_only_head(m_q, self.caption_attention(inst, m_q), p)
        pred = self.nmn_scores(inst)
        if self.variant == "nmn+cap":
            emb, mask = enc.embed_tokens(inst.caption, self.words, p, self.config.max_c_len)
            m_c = enc.project_context(enc.lstm_encode(emb, mask, p, "caption"), p, "caption")
            return fusion.caption_info_head(pred, m_q, m_c, p)
        if self.variant == "nmn+capattn":
            return fusion.caption_attn_head(pred, m_q, self.caption_attention(inst, m_q), p)
        return fusion.nmn_head(pred, m_q, p)

    def predict(self, inst: Instance, kb_vector=None) -> str:
        return fusion.predict_answer(self.forward(inst, kb_vector), self.answers.labels)


def build_model(config: RunConfig, train: Sequence[Instance],
                pretrained: dict[str, np.ndarray] | None = None) -> VqaModel:
    """Vocabularies from the training set, fresh parameters, Find weights registered."""
    if not train:
        raise ValueError("empty training set")
    dims = train[0].dims
    answers = build_answer_vocab(train, config.answers_k)
    words = enc.EmbeddingTable.from_corpus(inst.question + inst.caption for inst in train)
    if pretrained:
        dim = len(next(iter(pretrained.values())))
        if dim != config.d_emb:
            config.d_emb = dim
    model = VqaModel(config, answers, words, dims, pretrained)
    model.register_words(train)
    return model
