import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from textnmn.data import Instance
from textnmn.knowledge import tokenize
from textnmn.model import OTHER, AnswerVocab, RunConfig, build_answer_vocab, majority_answer, normalize_features
from textnmn.synthetic import gen_synthetic
from textnmn.tensor import Tensor
from textnmn.train import (
    EPS, RHO, AdadeltaState, EarlyStopping, adadelta_step, consensus_score, cross_entropy,
    evaluate, exact_score, question_category, train_loop,
)

from helpers import toy_instances, toy_model

TABLE_QUESTIONS = ["How many planes are flying?", "What is the food called?",
                   "What is the child holding?", "How many people are standing?",
                   "What color is the sign?", "Is there a tree on the desk?"]


def reference_adadelta(x, grad_fn, steps, rho=0.95, eps=1e-6):
    """Plain-float scalar ADADELTA."""
    eg = ed = 0.0
    xs = []
    for _ in range(steps):
        g = grad_fn(x)
        eg = rho * eg + (1 - rho) * g * g
        dx = -math.sqrt(ed + eps) / math.sqrt(eg + eps) * g
        ed = rho * ed + (1 - rho) * dx * dx
        x = x + dx
        xs.append(x)
    return xs


def run_adadelta(x0, grad_fn, steps):
    p = {"x": Tensor([x0])}
    state = AdadeltaState()
    xs = []
    for _ in range(steps):
        adadelta_step(p, {"x": np.array([grad_fn(p["x"].data[0])])}, state)
        xs.append(p["x"].data[0])
    return xs


def test_build_answer_vocab_examples():
    def inst(answers):
        return Instance(id="i", question=["q"], caption=[], answers=answers, features=np.zeros((1, 1, 1)))
    vocab = build_answer_vocab([inst(["yes"] * 5 + ["no"] * 3 + ["2"])], 2)
    assert vocab.answers == ["yes", "no"]
    assert build_answer_vocab([inst(["b", "a", "b", "a"])], 1).answers == ["a"]
    assert vocab.labels == ["yes", "no", OTHER] and vocab.target(["2"] * 3) == 2
    with pytest.raises(ValueError):
        build_answer_vocab([], 3)
    with pytest.raises(ValueError):
        build_answer_vocab([inst(["a"])], 0)


def test_answer_vocab_matches_brute_force_counter():
    for seed in range(3):
        data = gen_synthetic(seed, 300).instances
        counts = {}
        for inst in data:
            for a in inst.answers:
                counts[a] = counts.get(a, 0) + 1
        for K in (1, 3, 5, 64):
            brute = sorted(counts, key=lambda a: (-counts[a], a))[:K]
            assert build_answer_vocab(data, K).answers == brute


def test_majority_answer_tie_break():
    assert majority_answer(["b", "a", "b", "a", "c"]) == "a"
    with pytest.raises(ValueError):
        AnswerVocab(["a", "a"])


def test_normalize_features_examples(rng):
    assert np.array_equal(normalize_features(np.full((2, 2, 2), 3.0)), np.zeros((2, 2, 2)))
    assert np.array_equal(normalize_features(np.array([[[0.0, 2.0]]])), [[[-1.0, 1.0]]])
    for _ in range(10):
        out = normalize_features(rng.normal(3.0, 5.0, size=(4, 3, 3)))
        assert abs(out.mean()) <= 1e-12 and abs(out.std() - 1.0) <= 1e-9


def test_cross_entropy_examples():
    assert cross_entropy(Tensor([0.0, 1.0, 0.0]), 1).item() == 0.0
    assert cross_entropy(Tensor([0.25] * 4), 2).item() == pytest.approx(math.log(4), abs=1e-15)
    assert cross_entropy(Tensor([0.2, 0.8]), 0).item() == pytest.approx(-math.log(0.2), abs=1e-15)
    assert cross_entropy(Tensor([0.0, 1.0]), 0).item() == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy(Tensor([0.5, 0.5]), 2)


def test_adadelta_zero_gradient_only_decays_accumulators():
    p = {"w": Tensor([1.5, -2.0])}
    state = AdadeltaState()
    adadelta_step(p, {"w": np.array([0.3, -0.1])}, state)
    before = p["w"].data.copy()
    eg, ed = state.sq_grad["w"].copy(), state.sq_delta["w"].copy()
    adadelta_step(p, {"w": np.zeros(2)}, state)
    assert np.array_equal(p["w"].data, before)
    assert np.array_equal(state.sq_grad["w"], RHO * eg)
    assert np.array_equal(state.sq_delta["w"], RHO * ed)


def test_adadelta_first_step_closed_form():
    p = {"x": Tensor([0.0])}
    adadelta_step(p, {"x": np.array([1.0])}, AdadeltaState())
    assert p["x"].data[0] == pytest.approx(-math.sqrt(EPS / (0.05 + EPS)), abs=1e-15)


def test_adadelta_matches_reference_on_quadratics():
    r = np.random.default_rng(0)
    for _ in range(20):
        a, c, x0 = r.uniform(0.1, 10), r.normal(), r.normal(scale=3)
        grad = lambda x: a * (x - c)  # noqa: E731
        got = run_adadelta(x0, grad, 100)
        want = reference_adadelta(x0, grad, 100)
        assert max(abs(u - v) for u, v in zip(got, want)) <= 1e-12


def test_adadelta_rejects_nonfinite_gradient():
    p = {"w": Tensor([1.0]), "v": Tensor([2.0])}
    with pytest.raises(FloatingPointError, match="w"):
        adadelta_step(p, {"v": np.array([1.0]), "w": np.array([np.nan])}, AdadeltaState())
    assert p["v"].data[0] == 2.0


@given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
def test_adadelta_accumulators_stay_nonnegative(g):
    p = {"w": Tensor(np.zeros(3))}
    state = AdadeltaState()
    for _ in range(3):
        adadelta_step(p, {"w": g}, state)
    assert np.all(state.sq_grad["w"] >= 0) and np.all(state.sq_delta["w"] >= 0)


def test_early_stopping_patience():
    stopper = EarlyStopping(1)
    decisions = [stopper.update(e, acc) for e, acc in enumerate([10, 20, 19], start=1)]
    assert decisions == [False, False, True] and stopper.best_epoch == 2
    patient = EarlyStopping(2)
    assert [patient.update(e, a) for e, a in enumerate([5, 4, 6, 6, 6], 1)] == [False, False, False, False, True]


def test_consensus_metric():
    answers = ["a"] * 4 + ["b"] * 2 + ["c"] * 4
    assert consensus_score("a", answers) == 1.0
    assert consensus_score("b", answers) == pytest.approx(2 / 3)
    assert consensus_score("z", answers) == 0.0
    values = [consensus_score("a", ["a"] * m + ["x"] * (10 - m)) for m in range(11)]
    assert all(b >= a for a, b in zip(values, values[1:])) and max(values) == 1.0
    assert exact_score("a", answers) == 1.0 and exact_score("c", answers) == 0.0


def test_category_split_on_table_questions():
    cats = Counter(question_category(tokenize(q)) for q in TABLE_QUESTIONS)
    assert cats == {"number": 2, "yes/no": 1, "other": 3}


def test_train_loop_is_deterministic_and_keeps_best_epoch():
    train, val = toy_instances(8, seed=1), toy_instances(4, seed=2)
    runs = []
    for _ in range(2):
        model, _ = toy_model("nmn", instances=train)
        runs.append(train_loop(model.config, train, val, model=model))
    assert runs[0].history[0]["train_loss"] == runs[1].history[0]["train_loss"]
    for a, b in zip(runs[0].model.params.values(), runs[1].model.params.values()):
        assert a.data.tobytes() == b.data.tobytes()
    best = runs[0].best_epoch
    accs = [row["val_acc"] for row in runs[0].history]
    assert accs[best - 1] == max(accs)


def test_train_loop_rejects_dimension_mismatch():
    train = toy_instances(4)
    bad_val = toy_instances(2, dims=(4, 2, 2))
    model, _ = toy_model("nmn", instances=train)
    with pytest.raises(ValueError, match="features"):
        train_loop(model.config, train, bad_val, model=model)
    with pytest.raises(ValueError):
        train_loop(model.config, train, [], model=model)


def test_evaluate_equals_direct_memorization_rate():
    data = gen_synthetic(4, 60, grid=(3, 3)).instances
    cfg = RunConfig(q_hidden=16, measure_hidden=32, batch=4, epochs=3, patience=9, measure_for="both")
    result = train_loop(cfg, data, data[:10])
    model = result.model
    direct = np.mean([model.predict(i) == majority_answer(i.answers) for i in data])
    report = evaluate(model, data)
    assert report["overall"] == direct
    for cat in ("yes/no", "number", "other"):
        subset = [i for i in data if question_category(i.question) == cat]
        assert report[cat] == np.mean([model.predict(i) == majority_answer(i.answers) for i in subset])


def test_cap_only_beats_chance_on_answer_bearing_captions():
    train = gen_synthetic(5, 150, grid=(3, 3), informative_caption_rate=1.0).instances
    cfg = RunConfig(model="cap-only", batch=4, q_hidden=16, attn_k=32, patience=12)
    model = train_loop(cfg, train, train[:30]).model
    chance = 1.0 / len(model.answers)
    assert evaluate(model, train)["overall"] >= 5 * chance
