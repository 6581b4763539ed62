"""Shapes-on-a-grid VQA data with templated questions, captions and parses.

Each cell carries two one-hot slots: a color slot (none + 4 colors, attributes
0-4) and a shape slot (none + 3 shapes, attributes 5-8). Channel c of the
D x H x W features holds attribute c mod 9. Every cell has exactly two active
attributes, so grid mean and spread do not depend on how many objects a scene
has; per-grid normalization then maps every scene the same way. Every channel
gets independent Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Instance
from .layout import DepToken

COLORS = ("red", "green", "blue", "yellow")
SHAPES = ("circle", "square", "triangle")
COUNTS = ("1", "2", "3", "4")
TEMPLATES = ("color", "count", "exist")
FILLER_CAPTIONS = (
    ("some", "shapes", "on", "a", "grid"),
    ("a", "picture", "of", "objects"),
    ("shapes", "in", "the", "picture"),
)
MIN_CHANNELS = 2 + len(COLORS) + len(SHAPES)
_SHAPE_SLOT = 1 + len(COLORS)


@dataclass
class SyntheticData:
    instances: list[Instance]
    embeddings: dict[str, np.ndarray]
    parses: list[list[DepToken]]


def template_priors() -> dict[str, float]:
    """Marginal answer probabilities implied by the generator."""
    p = 1.0 / len(TEMPLATES)
    priors = {c: p / len(COLORS) for c in COLORS}
    priors.update({n: p / len(COUNTS) for n in COUNTS})
    priors.update({"yes": p / 2, "no": p / 2})
    return priors


def _parse(template: str, shape: str) -> list[DepToken]:
    if template == "color":
        rows = [(1, "what", 2, "det", "WH"), (2, "color", 3, "dep", "WH"), (3, "is", 0, "root", "VERB"),
                (4, "the", 5, "det", "OTHER"), (5, shape, 3, "nsubj", "NOUN")]
    elif template == "count":
        rows = [(1, "how", 2, "advmod", "WH"), (2, "many", 3, "amod", "WH"),
                (3, shape + "s", 0, "root", "NOUN")]
    else:
        rows = [(1, "is", 0, "root", "VERB"), (2, "there", 1, "expl", "OTHER"),
                (3, "a", 4, "det", "OTHER"), (4, shape, 1, "nsubj", "NOUN")]
    return [DepToken(*r) for r in rows]


def _scene(template: str, shape: str, answer: str, rng: np.random.Generator) -> list[tuple[str, str]]:
    others = [s for s in SHAPES if s != shape]
    objs: list[tuple[str, str]] = []
    if template == "color":
        objs.append((answer, shape))
        n_distract = rng.integers(0, 4)
    elif template == "count":
        objs += [(COLORS[rng.integers(len(COLORS))], shape) for _ in range(int(answer))]
        n_distract = rng.integers(0, 3)
    else:
        if answer == "yes":
            objs += [(COLORS[rng.integers(len(COLORS))], shape) for _ in range(rng.integers(1, 3))]
            n_distract = rng.integers(0, 4)
        else:
            n_distract = rng.integers(1, 4)
    objs += [(COLORS[rng.integers(len(COLORS))], others[rng.integers(len(others))])
             for _ in range(n_distract)]
    return objs


def render(objects, grid: tuple[int, int], channels: int, noise: float,
           rng: np.random.Generator) -> np.ndarray:
    h, w = grid
    if len(objects) > h * w:
        raise ValueError("more objects than grid cells")
    base = np.zeros((MIN_CHANNELS, h, w))
    base[0] = 1.0
    base[_SHAPE_SLOT] = 1.0
    cells = rng.permutation(h * w)[: len(objects)]
    for (color, shape), cell in zip(objects, cells):
        y, x = divmod(int(cell), w)
        base[0, y, x] = base[_SHAPE_SLOT, y, x] = 0.0
        base[1 + COLORS.index(color), y, x] = 1.0
        base[_SHAPE_SLOT + 1 + SHAPES.index(shape), y, x] = 1.0
    # channel c repeats attribute c mod MIN_CHANNELS
    feats = base[np.arange(channels) % MIN_CHANNELS]
    return feats + noise * rng.standard_normal(feats.shape)


def _caption(template: str, shape: str, answer: str, informative: bool,
             rng: np.random.Generator) -> list[str]:
    if not informative:
        return list(FILLER_CAPTIONS[rng.integers(len(FILLER_CAPTIONS))])
    if template == "color":
        return ["a", answer, shape, "in", "the", "picture"]
    if template == "count":
        return [answer, shape + "s", "in", "the", "picture"]
    if answer == "yes":
        return ["yes", "a", shape, "in", "the", "picture"]
    return ["no", shape, "in", "the", "picture"]


def gen_synthetic(seed: int, n: int, grid: tuple[int, int] = (5, 5),
                  informative_caption_rate: float = 0.5, channels: int = 16,
                  noise: float = 0.1, emb_dim: int = 64) -> SyntheticData:
    """Generate ``n`` instances; templates are uniform and answers uniform within a template."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if channels < MIN_CHANNELS:
        raise ValueError(f"need at least {MIN_CHANNELS} channels")
    rng = np.random.default_rng(seed)
    instances, parses = [], []
    for i in range(n):
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        shape = SHAPES[rng.integers(len(SHAPES))]
        if template == "color":
            answer = COLORS[rng.integers(len(COLORS))]
        elif template == "count":
            answer = COUNTS[rng.integers(len(COUNTS))]
        else:
            answer = ("yes", "no")[rng.integers(2)]
        feats = render(_scene(template, shape, answer, rng), grid, channels, noise, rng)
        informative = bool(rng.random() < informative_caption_rate)
        caption = _caption(template, shape, answer, informative, rng)
        parse = _parse(template, shape)
        instances.append(Instance(
            id=f"syn{seed}-{i}",
            question=[t.form for t in parse],
            caption=caption,
            answers=[answer] * 10,
            features=feats,
            dep_parse=parse,
        ))
        parses.append(parse)
    vocab = sorted({w for inst in instances for w in inst.question + inst.caption})
    emb_rng = np.random.default_rng([seed, 1])
    embeddings = {w: emb_rng.standard_normal(emb_dim) / np.sqrt(emb_dim) for w in vocab}
    return SyntheticData(instances, embeddings, parses)
