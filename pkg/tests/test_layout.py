import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from textnmn.layout import (
    DepToken, LayoutError, LayoutSyntaxError, LayoutTypeError, ModuleKind, PortType,
    UncompilableQuestion, and_, compile_from_parse, describe, find, measure,
    parse_layout_sexpr, read_conll, top_module_policy, type_check, write_conll,
)
from textnmn.synthetic import gen_synthetic

DATA = Path(__file__).parent / "data"
WORDS = st.sampled_from(["person", "dog", "red", "playing", "x1", "tree"])


def attention_trees(depth=3):
    leaf = WORDS.map(find)
    return st.recursive(leaf, lambda sub: st.tuples(sub, sub).map(lambda ab: and_(*ab)), max_leaves=5)


layouts = st.tuples(st.sampled_from([describe, measure]), attention_trees()).map(lambda p: p[0](p[1]))


def fixture():
    with open(DATA / "questions.conll", encoding="utf-8") as fh:
        sentences = read_conll(fh)
    expected = json.loads((DATA / "layouts.json").read_text())
    return list(zip(sentences, expected))


def test_parse_describe_find():
    layout = parse_layout_sexpr("Describe(Find(person))")
    assert layout == describe(find("person"))
    assert layout.kind is ModuleKind.DESCRIBE


def test_parse_is_case_insensitive_and_lowercases_words():
    assert parse_layout_sexpr("describe( AND(find(Person),FIND(Playing)) )") == describe(
        and_(find("person"), find("playing")))


@pytest.mark.parametrize("text", ["And(Find(a))", "Describe(Find(a), Find(b))", "Find()",
                                  "Describe(Find(a)", "Describe(Find(a)))", "Look(Find(a))", ""])
def test_parse_errors_carry_position(text):
    with pytest.raises(LayoutSyntaxError) as err:
        parse_layout_sexpr(text)
    assert err.value.position >= 0


def test_and_arity_error():
    with pytest.raises(LayoutSyntaxError, match="And takes 2"):
        parse_layout_sexpr("And(Find(a))")


@given(layouts)
def test_print_parse_round_trip(layout):
    text = str(layout)
    assert parse_layout_sexpr(text) == layout
    assert str(parse_layout_sexpr(text)) == text


def test_round_trip_on_50_generated_layouts():
    import numpy as np
    r = np.random.default_rng(5)

    def att(d):
        if d == 0 or r.random() < 0.4:
            return find(f"w{r.integers(20)}")
        return and_(att(d - 1), att(d - 1))

    for _ in range(50):
        layout = (describe if r.random() < 0.5 else measure)(att(3))
        assert parse_layout_sexpr(str(layout)) == layout


def test_type_check_accepts_and_rejects():
    assert type_check(describe(find("w"))) is PortType.LABELS
    bad = parse_layout_sexpr("Measure(Describe(Find(w)))")
    with pytest.raises(LayoutTypeError) as err:
        type_check(bad)
    assert err.value.expected is PortType.ATTENTION
    assert err.value.actual is PortType.LABELS
    assert "Measure/0:Describe" in str(err.value)
    with pytest.raises(LayoutTypeError):
        type_check(find("w"))


def test_layout_constructor_enforces_arity_and_word():
    from textnmn.layout import Layout
    with pytest.raises(LayoutError):
        Layout(ModuleKind.AND, None, (find("a"),))
    with pytest.raises(LayoutError):
        Layout(ModuleKind.FIND, None)


@pytest.mark.parametrize("mode", ["short", "longest"])
def test_fixture_layouts(mode):
    for tokens, want in fixture():
        got = compile_from_parse(tokens, mode, "auto", want["counting"], want["yesno"])
        assert str(got) == want[mode], " ".join(t.form for t in tokens)
        type_check(got)


def test_person_playing_pair():
    tokens = fixture()[0][0]
    assert str(compile_from_parse(tokens, "short")) == "Describe(Find(person))"
    assert str(compile_from_parse(tokens, "longest")) == "Describe(And(Find(person), Find(playing)))"


def test_forced_top_module():
    tokens = fixture()[0][0]
    assert str(compile_from_parse(tokens, "short", "measure")) == "Measure(Find(person))"
    planes = fixture()[1][0]
    assert str(compile_from_parse(planes, "short", "describe", counting=True)) == "Describe(Find(planes))"


def test_no_noun_is_uncompilable():
    tokens = [DepToken(1, "is", 0, "root", "VERB"), DepToken(2, "it", 1, "nsubj", "OTHER")]
    with pytest.raises(UncompilableQuestion, match="uncompilable"):
        compile_from_parse(tokens)


@pytest.mark.parametrize("question,counting,yesno,kind", [
    ("what color is the sign", True, True, ModuleKind.DESCRIBE),
    ("how many planes are flying", True, False, ModuleKind.MEASURE),
    ("how many planes are flying", False, True, ModuleKind.DESCRIBE),
    ("is there a tree on the desk", False, True, ModuleKind.MEASURE),
    ("is there a tree on the desk", True, False, ModuleKind.DESCRIBE),
    ("Can you see it", False, True, ModuleKind.MEASURE),
])
def test_top_module_policy(question, counting, yesno, kind):
    assert top_module_policy(question.split(), counting, yesno) is kind


def test_compiler_is_deterministic_and_short_is_subset_of_longest():
    for tokens, _ in fixture():
        a = compile_from_parse(tokens, "longest")
        assert compile_from_parse(list(tokens), "longest") == a
        assert set(compile_from_parse(tokens, "short").find_words()) <= set(a.find_words())


def test_every_synthetic_parse_compiles_and_type_checks():
    data = gen_synthetic(3, 300)
    for parse in data.parses:
        for mode in ("short", "longest"):
            for policy in ((False, False), (True, True)):
                type_check(compile_from_parse(parse, mode, "auto", *policy))


def test_conll_round_trip_and_validation():
    sentences = [t for t, _ in fixture()]
    text = write_conll(sentences)
    assert read_conll(text.splitlines(keepends=True)) == sentences
    with pytest.raises(ValueError, match="line 1"):
        read_conll(["1\tonly\tthree\n"])
    with pytest.raises(ValueError, match="root"):
        read_conll(["1\ta\t2\tdep\tNOUN\n", "2\tb\t1\tdep\tNOUN\n"])
