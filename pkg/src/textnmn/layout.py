"""Typed module layouts: S-expression syntax, type checking, and compilation
from dependency parses."""
from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class PortType(enum.Enum):
    IMAGE = "ImageGrid"
    ATTENTION = "AttentionMap"
    LABELS = "LabelScores"


class ModuleKind(enum.Enum):
    FIND = "Find"
    AND = "And"
    DESCRIBE = "Describe"
    MEASURE = "Measure"


# Child ports only; ImageGrid reaches Find and Describe implicitly.
SIGNATURES: dict[ModuleKind, tuple[tuple[PortType, ...], PortType]] = {
    ModuleKind.FIND: ((), PortType.ATTENTION),
    ModuleKind.AND: ((PortType.ATTENTION, PortType.ATTENTION), PortType.ATTENTION),
    ModuleKind.DESCRIBE: ((PortType.ATTENTION,), PortType.LABELS),
    ModuleKind.MEASURE: ((PortType.ATTENTION,), PortType.LABELS),
}

_BY_NAME = {k.value.lower(): k for k in ModuleKind}


class LayoutError(ValueError):
    pass


class LayoutSyntaxError(LayoutError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class LayoutTypeError(LayoutError):
    def __init__(self, path: str, expected: PortType, actual: PortType):
        super().__init__(f"{path}: expected {expected.value}, got {actual.value}")
        self.path = path
        self.expected = expected
        self.actual = actual


class UncompilableQuestion(LayoutError):
    pass


@dataclass(frozen=True)
class Layout:
    kind: ModuleKind
    word: str | None = None
    children: tuple["Layout", ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        arity = len(SIGNATURES[self.kind][0])
        if len(self.children) != arity:
            raise LayoutError(f"{self.kind.value} takes {arity} children, got {len(self.children)}")
        if (self.kind is ModuleKind.FIND) != (self.word is not None):
            raise LayoutError(f"{self.kind.value}: a word argument is required iff the module is Find")
        if self.word is not None and self.word != self.word.lower():
            object.__setattr__(self, "word", self.word.lower())

    def __str__(self):
        if self.kind is ModuleKind.FIND:
            return f"Find({self.word})"
        return f"{self.kind.value}({', '.join(str(c) for c in self.children)})"

    def find_words(self) -> list[str]:
        if self.kind is ModuleKind.FIND:
            return [self.word]
        return [w for c in self.children for w in c.find_words()]


def find(word: str) -> Layout:
    return Layout(ModuleKind.FIND, word)


def and_(a: Layout, b: Layout) -> Layout:
    return Layout(ModuleKind.AND, None, (a, b))


def describe(att: Layout) -> Layout:
    return Layout(ModuleKind.DESCRIBE, None, (att,))


def measure(att: Layout) -> Layout:
    return Layout(ModuleKind.MEASURE, None, (att,))


# -- text format ----------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<punct>[(),])|(?P<atom>[^\s(),]+))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise LayoutSyntaxError("unexpected character", pos)
        if m.group("punct"):
            out.append((m.group("punct"), m.start("punct")))
        elif m.group("atom"):
            out.append((m.group("atom"), m.start("atom")))
        else:
            break
        pos = m.end()
    return out


def parse_layout_sexpr(text: str) -> Layout:
    """Parse ``Describe(And(Find(person), Find(playing)))`` style text."""
    toks = _tokenize(text)
    i = 0

    def peek():
        return toks[i] if i < len(toks) else ("", len(text))

    def expect(sym):
        nonlocal i
        tok, pos = peek()
        if tok != sym:
            raise LayoutSyntaxError(f"expected {sym!r}, found {tok or 'end of input'!r}", pos)
        i += 1

    def node() -> Layout:
        nonlocal i
        name, pos = peek()
        if name in ("", "(", ")", ","):
            raise LayoutSyntaxError("expected a module name", pos)
        kind = _BY_NAME.get(name.lower())
        if kind is None:
            raise LayoutSyntaxError(f"unknown module {name!r}", pos)
        i += 1
        expect("(")
        if kind is ModuleKind.FIND:
            word, wpos = peek()
            if word in ("", "(", ")", ","):
                raise LayoutSyntaxError("Find needs a word argument", wpos)
            i += 1
            expect(")")
            return find(word.lower())
        children = [node()]
        while peek()[0] == ",":
            i += 1
            children.append(node())
        close_pos = peek()[1]
        expect(")")
        arity = len(SIGNATURES[kind][0])
        if len(children) != arity:
            raise LayoutSyntaxError(
                f"{kind.value} takes {arity} argument(s), got {len(children)}", close_pos
            )
        return Layout(kind, None, tuple(children))

    result = node()
    if i != len(toks):
        raise LayoutSyntaxError(f"trailing input {toks[i][0]!r}", toks[i][1])
    return result


def type_check(layout: Layout, path: str = "") -> PortType:
    """Return the root output type; raise LayoutTypeError unless it is LabelScores."""
    out = _infer(layout, path or layout.kind.value)
    if out is not PortType.LABELS:
        raise LayoutTypeError(path or layout.kind.value, PortType.LABELS, out)
    return out


def _infer(layout: Layout, path: str) -> PortType:
    inputs, output = SIGNATURES[layout.kind]
    for n, (child, want) in enumerate(zip(layout.children, inputs)):
        child_path = f"{path}/{n}:{child.kind.value}"
        got = _infer(child, child_path)
        if got is not want:
            raise LayoutTypeError(child_path, want, got)
    return output


# -- dependency parses ----------------------------------------------------

POS_TAGS = ("NOUN", "VERB", "ADP", "WH", "OTHER")

AUXILIARIES = frozenset(
    "is are does do was were has have can could will would".split()
)
# Extra auxiliary-like forms never turned into Find modules.
_NON_CONTENT = AUXILIARIES | {"be", "been", "being", "am", "did", "had", "should", "shall", "may", "might", "must"}
_AUX_RELATIONS = {"aux", "auxpass", "cop"}


@dataclass(frozen=True)
class DepToken:
    index: int
    form: str
    head: int
    relation: str
    pos: str

    def __post_init__(self):
        if self.pos not in POS_TAGS:
            raise ValueError(f"unknown coarse tag {self.pos!r}")


def validate_parse(tokens: Sequence[DepToken]) -> None:
    n = len(tokens)
    if n == 0:
        raise ValueError("empty parse")
    for k, t in enumerate(tokens, start=1):
        if t.index != k:
            raise ValueError(f"token {k} has index {t.index}")
        if not 0 <= t.head <= n:
            raise ValueError(f"token {k} head {t.head} out of range")
    roots = [t for t in tokens if t.head == 0]
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root, found {len(roots)}")


def read_conll(lines: Iterable[str]) -> list[list[DepToken]]:
    """Read tab-separated ``index form head relation pos`` rows; blank lines split sentences."""
    sentences: list[list[DepToken]] = []
    current: list[DepToken] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            if current:
                sentences.append(current)
                current = []
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise ValueError(f"line {lineno}: expected 5 tab-separated fields, got {len(cols)}")
        try:
            current.append(DepToken(int(cols[0]), cols[1], int(cols[2]), cols[3], cols[4].upper()))
        except ValueError as e:
            raise ValueError(f"line {lineno}: {e}") from None
    if current:
        sentences.append(current)
    for s in sentences:
        validate_parse(s)
    return sentences


def write_conll(sentences: Iterable[Sequence[DepToken]]) -> str:
    blocks = []
    for s in sentences:
        blocks.append("\n".join(f"{t.index}\t{t.form}\t{t.head}\t{t.relation}\t{t.pos}" for t in s))
    return "\n\n".join(blocks) + "\n"


def top_module_policy(question_tokens: Sequence[str], counting: bool = False, yesno: bool = False) -> ModuleKind:
    """Measure for counting / yes-no questions when the matching flag is on, else Describe."""
    if not question_tokens:
        raise ValueError("empty question")
    words = [w.lower() for w in question_tokens]
    if yesno and words[0] in AUXILIARIES:
        return ModuleKind.MEASURE
    if counting and words[:2] == ["how", "many"]:
        return ModuleKind.MEASURE
    return ModuleKind.DESCRIBE


def _hop_distances(tokens: Sequence[DepToken], sources: Iterable[int]) -> dict[int, int]:
    adj: dict[int, list[int]] = {t.index: [] for t in tokens}
    for t in tokens:
        if t.head:
            adj[t.index].append(t.head)
            adj[t.head].append(t.index)
    dist = {s: 0 for s in sources}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _wh_anchor(tokens: Sequence[DepToken]) -> list[int]:
    # a run of WH tags ("how many", "what color") anchors as one phrase
    for k, t in enumerate(tokens):
        if t.pos == "WH":
            anchor = [t.index]
            for u in tokens[k + 1:]:
                if u.pos != "WH":
                    break
                anchor.append(u.index)
            return anchor
    return [tokens[0].index]


def _is_content(t: DepToken) -> bool:
    return (
        t.pos in ("NOUN", "VERB")
        and t.relation.lower() not in _AUX_RELATIONS
        and t.form.lower() not in _NON_CONTENT
    )


def collect_words(tokens: Sequence[DepToken], radius: int = 2) -> list[DepToken]:
    """Nouns and verbs within ``radius`` hops of the wh-phrase, in sentence order.

    A preposition in range contributes its noun dependents instead of itself.
    """
    validate_parse(tokens)
    anchor = _wh_anchor(tokens)
    dist = _hop_distances(tokens, anchor)
    picked: dict[int, DepToken] = {}
    for t in tokens:
        if t.index in anchor or dist.get(t.index, radius + 1) > radius:
            continue
        if t.pos == "ADP":
            for d in tokens:
                if d.head == t.index and d.pos == "NOUN" and d.index not in anchor:
                    picked[d.index] = d
        elif _is_content(t):
            picked[t.index] = t
    return [picked[i] for i in sorted(picked)]


def compile_from_parse(
    tokens: Sequence[DepToken],
    mode: str = "short",
    top: str = "auto",
    counting: bool = False,
    yesno: bool = False,
) -> Layout:
    """Compile a dependency parse into a layout.

    ``mode="short"`` keeps the noun nearest the wh-phrase (fewest hops, then
    leftmost); ``mode="longest"`` keeps every collected word, joined left to
    right by nested And. ``top`` forces the root module or, with ``"auto"``,
    defers to :func:`top_module_policy` with the counting / yes-no flags.
    """
    if mode not in ("short", "longest"):
        raise ValueError(f"unknown mode {mode!r}")
    if top not in ("auto", "describe", "measure"):
        raise ValueError(f"unknown top module {top!r}")
    validate_parse(tokens)
    if not any(t.pos == "NOUN" for t in tokens):
        raise UncompilableQuestion("uncompilable question: no noun in parse")
    collected = collect_words(tokens)
    dist = _hop_distances(tokens, _wh_anchor(tokens))
    anchor = set(_wh_anchor(tokens))

    def hops(t: DepToken) -> int:
        d = dist.get(t.index, len(tokens) + 1)
        head = tokens[t.head - 1] if t.head else None
        if head is not None and head.pos == "ADP":
            d = min(d, dist.get(head.index, len(tokens) + 1))
        return d

    nouns = [t for t in collected if t.pos == "NOUN"]
    if not nouns:
        # nothing in range: fall back to the nearest noun anywhere
        fallback = [t for t in tokens if t.pos == "NOUN" and t.index not in anchor] or [
            t for t in tokens if t.pos == "NOUN"
        ]
        nearest = min(fallback, key=lambda t: (hops(t), t.index))
        collected = sorted(collected + [nearest], key=lambda t: t.index)
        nouns = [nearest]
    if mode == "short":
        words = [min(nouns, key=lambda t: (hops(t), t.index))]
    else:
        words = collected
    body = find(words[0].form.lower())
    for t in words[1:]:
        body = and_(body, find(t.form.lower()))
    if top == "auto":
        kind = top_module_policy([t.form for t in tokens], counting=counting, yesno=yesno)
    else:
        kind = ModuleKind.MEASURE if top == "measure" else ModuleKind.DESCRIBE
    return Layout(kind, None, (body,))
