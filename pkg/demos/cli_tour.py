"""
Command-line tour
=================

Runs every ``textnmn`` subcommand once inside a scratch directory and prints
what each one wrote.
"""
import sys
import tempfile
from pathlib import Path

from textnmn.cli import main

here = Path(__file__).resolve().parent.parent / "tests" / "data"
work = Path(tempfile.mkdtemp())


def run(*argv):
    print("$ textnmn", " ".join(argv))
    code = main(list(argv))
    print("  exit", code)
    return code


run("gen-synth", "--out", str(work / "train.jsonl"), "--n", "120", "--grid", "3", "--seed", "1")
run("gen-synth", "--out", str(work / "test.jsonl"), "--n", "40", "--grid", "3", "--seed", "2")

run("train", "--data", str(work / "train.jsonl"), "--out", str(work / "model.ckpt"), "--model", "nmn+cap",
    "--batch", "4", "--epochs", "4", "--q-hidden", "16", "--c-hidden", "16", "--measure-for", "both")
print(" ", (work / "model.ckpt.metrics.log").read_text().strip().replace("\n", "\n  "))

run("eval", "--ckpt", str(work / "model.ckpt"), "--test", str(work / "test.jsonl"))
run("predict", "--ckpt", str(work / "model.ckpt"), "--test", str(work / "test.jsonl"),
    "--out", str(work / "preds.jsonl"))
print(" ", (work / "preds.jsonl").read_text().splitlines()[0])

run("compile-layout", "--parse", str(here / "questions.conll"), "--mode", "longest")

run("kb-index", "--abstracts", str(here / "abstracts.tsv"), "--out", str(work / "kb.idx"))
run("kb-query", "--index", str(work / "kb.idx"), "--question", "What toppings are on the pizza?")

# errors map to stable exit codes; a missing file is 3
sys.exit(0 if run("eval", "--ckpt", str(work / "nope.ckpt"), "--test", str(work / "test.jsonl")) == 3 else 1)
