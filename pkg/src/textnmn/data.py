"""VQA instances and the ``instances.jsonl`` format.

Each line is one JSON object::

    {"id": "...", "question": [...], "caption": [...], "answers": [...],
     "features": {"shape": [D, H, W], "data": [...]}      # or
     "features_ref": "feats.npy#12",                      # row 12 of an (n, D, H, W) .npy
     "dep_parse": [[index, form, head, relation, pos], ...],   # optional
     "layout": "Describe(Find(circle))"}                        # optional

A relative ``features_ref`` path is resolved against the jsonl file's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .layout import DepToken, validate_parse


class MalformedInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class Instance:
    id: str
    question: list[str]
    caption: list[str]
    answers: list[str]
    features: np.ndarray
    dep_parse: list[DepToken] | None = None
    layout: str | None = None

    def __post_init__(self):
        if not 1 <= len(self.answers) <= 10:
            raise MalformedInput(f"instance {self.id}: expected 1-10 answers, got {len(self.answers)}")
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 3:
            raise MalformedInput(f"instance {self.id}: features must be D x H x W")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.features.shape)


def check_dims(instances: Iterable[Instance], dims: Sequence[int]) -> None:
    dims = tuple(dims)
    for inst in instances:
        if inst.dims != dims:
            raise DimensionMismatch(f"instance {inst.id}: features {inst.dims}, expected {dims}")


def _parse_tokens(rows) -> list[DepToken]:
    toks = [DepToken(int(r[0]), str(r[1]), int(r[2]), str(r[3]), str(r[4]).upper()) for r in rows]
    validate_parse(toks)
    return toks


def instance_from_json(obj: dict, base: Path | None = None, packs: dict | None = None) -> Instance:
    try:
        if "features" in obj:
            f = obj["features"]
            feats = np.asarray(f["data"], dtype=np.float64).reshape(f["shape"])
        elif "features_ref" in obj:
            ref, _, row = obj["features_ref"].partition("#")
            path = Path(ref) if base is None or Path(ref).is_absolute() else base / ref
            packs = {} if packs is None else packs
            if path not in packs:
                packs[path] = np.load(path, mmap_mode="r")
            feats = np.array(packs[path][int(row)], dtype=np.float64)
        else:
            raise MalformedInput(f"instance {obj.get('id')}: no features or features_ref")
        parse = _parse_tokens(obj["dep_parse"]) if obj.get("dep_parse") else None
        return Instance(
            id=str(obj["id"]),
            question=[str(t) for t in obj["question"]],
            caption=[str(t) for t in obj.get("caption", [])],
            answers=[str(a) for a in obj["answers"]],
            features=feats,
            dep_parse=parse,
            layout=obj.get("layout"),
        )
    except MalformedInput:
        raise
    except FileNotFoundError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise MalformedInput(f"instance {obj.get('id', '?')}: {e}") from e


def instance_to_json(inst: Instance) -> dict:
    obj = {
        "id": inst.id,
        "question": list(inst.question),
        "caption": list(inst.caption),
        "answers": list(inst.answers),
        "features": {"shape": list(inst.features.shape), "data": inst.features.reshape(-1).tolist()},
    }
    if inst.dep_parse is not None:
        obj["dep_parse"] = [[t.index, t.form, t.head, t.relation, t.pos] for t in inst.dep_parse]
    if inst.layout is not None:
        obj["layout"] = inst.layout
    return obj


def load_instances(path: str | Path) -> list[Instance]:
    path = Path(path)
    packs: dict = {}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedInput(f"{path}:{lineno}: {e}") from e
            out.append(instance_from_json(obj, path.parent, packs))
    return out


def save_instances(path: str | Path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_json(inst), separators=(",", ":")) + "\n")
