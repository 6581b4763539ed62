"""Shared toy builders for the test suite."""
import numpy as np

from textnmn import tensor as T
from textnmn.data import Instance
from textnmn.model import RunConfig, build_model
from textnmn.train import batch_loss

ANSWERS = ["red", "blue", "2", "yes", "no"]


def toy_instances(n=6, seed=0, dims=(4, 3, 3)):
    r = np.random.default_rng(seed)
    layouts = ["Describe(And(Find(red), Find(circle)))", "Measure(Find(circle))",
               "Describe(Find(square))", "Measure(And(Find(circle), Find(square)))"]
    out = []
    for i in range(n):
        out.append(Instance(
            id=f"toy{i}",
            question=["what", "color", "is", "the", "circle"] if i % 2 == 0 else ["how", "many", "circles"],
            caption=["a", "red", "circle", "and", "a", "square"][: 3 + i % 4],
            answers=[ANSWERS[i % len(ANSWERS)]] * 10,
            features=r.normal(size=dims),
            layout=layouts[i % len(layouts)],
        ))
    return out


def toy_model(variant, seed=0, instances=None, **overrides):
    """K=5 answers, D=4, H=W=3, every hidden width 8."""
    cfg = dict(model=variant, answers_k=5, d_emb=6, q_hidden=8, c_hidden=8, attn_k=8,
               measure_hidden=8, kb_dim=6, seed=seed)
    cfg.update(overrides)
    instances = instances or toy_instances()
    model = build_model(RunConfig(**cfg), instances)
    r = np.random.default_rng(seed + 100)
    for name, t in model.params.items():
        if name.startswith("find/"):
            # random selectivity, with a bias that keeps every cell clear of the relu kink
            t.data[:-1] = r.normal(scale=0.2, size=t.size - 1)
            t.data[-1] = 2.0
    return model, instances


def head_gradient_error(variant, seed=0):
    """Max relative gradient error of the mean cross entropy over two toy instances."""
    model, instances = toy_model(variant, seed)
    batch = instances[:2]
    kb = {}
    if variant == "nmn+kb":
        r = np.random.default_rng(seed + 7)
        kb = {inst.id: r.normal(size=model.config.kb_dim) for inst in batch}
        model.params["kb/seed_bias"].data[:] = r.normal(scale=0.1, size=model.config.q_hidden)
    return T.gradient_check(lambda: batch_loss(model, batch, kb), dict(model.params.items()))
