"""Command-line entry point: ``textnmn <command> [flags]``.

Errors go to stderr as one JSON line, ``{"error": <kind>, "message": <text>}``,
and the process exits with the code for that kind:

    1  internal error
    2  usage error (bad or unknown flags)
    3  missing file
    4  dimension mismatch
    5  malformed input
    6  bad checkpoint or index file
    7  question cannot be compiled into a layout
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DimensionMismatch, MalformedInput, load_instances, save_instances
from .encoders import load_embedding_file, write_embedding_file
from .knowledge import IndexFormatError, KbIndex, extract_query_nouns, ingest_abstracts, search, tokenize
from .layout import LayoutError, compile_from_parse, read_conll, type_check
from .model import VARIANTS, RunConfig
from .synthetic import gen_synthetic
from .train import evaluate, kb_vectors, train_loop

log = logging.getLogger("textnmn")

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "missing_file": 3,
    "dimension_mismatch": 4,
    "malformed_input": 5,
    "bad_checkpoint": 6,
    "uncompilable": 7,
}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


def _need_file(path: str | None, flag: str) -> Path:
    if not path:
        raise CliError("usage", f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_file", f"{flag}: no such file: {path}")
    return p


# -- commands -------------------------------------------------------------------

def _config_from_args(args) -> RunConfig:
    return RunConfig(
        model=args.model, batch=args.batch, epochs=args.epochs, patience=args.patience,
        answers_k=args.answers_k, d_emb=args.d_emb, q_hidden=args.q_hidden, c_hidden=args.c_hidden,
        attn_k=args.attn_k, measure_hidden=args.measure_hidden, kb_topk=args.kb_topk,
        parse_mode=args.parse_mode, measure_for=args.measure_for, metric=args.metric, seed=args.seed,
        data=args.data, val=args.val, embeddings=args.embeddings, abstracts=args.abstracts,
        index=args.index,
    )


def _split_validation(instances, seed: int):
    """Hold out a seeded tenth (at least one instance) when no --val is given."""
    if len(instances) < 2:
        raise CliError("malformed_input", "need at least two instances to hold out validation data")
    order = np.random.default_rng([seed, 7]).permutation(len(instances))
    n_val = max(1, len(instances) // 10)
    val_ids = set(order[:n_val].tolist())
    train = [x for i, x in enumerate(instances) if i not in val_ids]
    val = [x for i, x in enumerate(instances) if i in val_ids]
    return train, val


def _kb_index(args, embeddings=None) -> KbIndex | None:
    if args.index:
        return KbIndex.load(_need_file(args.index, "--index"))
    if args.abstracts:
        return KbIndex.build(ingest_abstracts(_need_file(args.abstracts, "--abstracts")), embeddings)
    return None


def cmd_train(args) -> int:
    data = load_instances(_need_file(args.data, "--data"))
    if args.val:
        train, val = data, load_instances(_need_file(args.val, "--val"))
    else:
        train, val = _split_validation(data, args.seed)
    config = _config_from_args(args)
    pretrained = load_embedding_file(_need_file(args.embeddings, "--embeddings")) if args.embeddings else None
    index = None
    if config.model == "nmn+kb":
        index = _kb_index(args, pretrained)
        if index is None:
            raise CliError("usage", "--model nmn+kb needs --index or --abstracts")
        config.kb_dim = index.dim
    if not args.out:
        raise CliError("usage", "--out is required")
    metrics = args.metrics or str(args.out) + ".metrics.log"
    result = train_loop(config, train, val, index, pretrained, metrics_path=metrics)
    save_checkpoint(result.model, args.out)
    best = result.history[result.best_epoch - 1]
    print(json.dumps({"checkpoint": str(args.out), "best_epoch": result.best_epoch,
                      "train_acc": best["train_acc"], "val_acc": best["val_acc"]}))
    return 0


def _load_for_data(args, instances):
    ckpt = _need_file(args.ckpt, "--ckpt")
    dims = instances[0].dims if instances else None
    model = load_checkpoint(ckpt, dims)
    index = None
    if model.variant == "nmn+kb":
        if args.index or args.abstracts:
            index = _kb_index(args)
        elif model.config.index and Path(model.config.index).is_file():
            index = KbIndex.load(model.config.index)
        else:
            raise CliError("usage", "--model nmn+kb checkpoint needs --index")
    return model, index


def _eval_data(args) -> str:
    path = args.test or args.data
    if not path:
        raise CliError("usage", "--test (or --data) is required")
    return path


def cmd_eval(args) -> int:
    path = _eval_data(args)
    instances = load_instances(_need_file(path, "--test"))
    model, index = _load_for_data(args, instances)
    kb = kb_vectors(instances, index, model.config.kb_topk) if index else {}
    scores = evaluate(model, instances, args.metric, kb)
    print(json.dumps({"metric": args.metric, "n": len(instances), **scores}))
    return 0


def cmd_predict(args) -> int:
    path = _eval_data(args)
    instances = load_instances(_need_file(path, "--test"))
    model, index = _load_for_data(args, instances)
    kb = kb_vectors(instances, index, model.config.kb_topk) if index else {}
    labels = model.answers.labels
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for inst in instances:
            dist = model.forward(inst, kb.get(inst.id)).data
            top = sorted(range(len(dist)), key=lambda i: (-dist[i], i))[:5]
            out.write(json.dumps({
                "id": inst.id,
                "answer": labels[top[0]],
                "top5": [[labels[i], float(dist[i])] for i in top],
            }) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_compile_layout(args) -> int:
    path = _need_file(args.parse, "--parse")
    with open(path, encoding="utf-8") as fh:
        sentences = read_conll(fh)
    counting, yesno = args.measure_for in ("count", "both"), args.measure_for in ("yesno", "both")
    for tokens in sentences:
        layout = compile_from_parse(tokens, args.mode, "auto", counting=counting, yesno=yesno)
        type_check(layout)
        print(layout)
    return 0


def cmd_kb_index(args) -> int:
    docs = ingest_abstracts(_need_file(args.abstracts, "--abstracts"))
    embeddings = load_embedding_file(_need_file(args.embeddings, "--embeddings")) if args.embeddings else None
    if not args.out:
        raise CliError("usage", "--out is required")
    index = KbIndex.build(docs, embeddings)
    index.save(args.out)
    print(json.dumps({"index": str(args.out), "documents": index.n_docs, "terms": len(index.postings)}))
    return 0


def cmd_kb_query(args) -> int:
    index = KbIndex.load(_need_file(args.index, "--index"))
    if not args.question:
        raise CliError("usage", "--question is required")
    terms = extract_query_nouns(tokenize(args.question))
    for rank, (doc_id, score) in enumerate(search(index, terms, args.k), start=1):
        print(json.dumps({"rank": rank, "doc_id": doc_id, "title": index.titles[doc_id], "score": score}))
    return 0


def cmd_gen_synth(args) -> int:
    if not args.out:
        raise CliError("usage", "--out is required")
    data = gen_synthetic(args.seed, args.n, (args.grid, args.grid), args.caption_rate,
                         channels=args.channels)
    out = Path(args.out)
    save_instances(out, data.instances)
    emb_path = out.with_suffix(".emb.txt")
    write_embedding_file(emb_path, data.embeddings)
    print(json.dumps({"instances": str(out), "embeddings": str(emb_path), "n": args.n}))
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "compile-layout": cmd_compile_layout,
    "kb-index": cmd_kb_index,
    "kb-query": cmd_kb_query,
    "gen-synth": cmd_gen_synth,
}


# -- argument parsing ---------------------------------------------------------------

def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {value}")
    return value


def _rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1]: {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="textnmn", description="Module networks for VQA with caption and knowledge fusion.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def files(p, *names):
        helps = {
            "data": "instances.jsonl for training (or evaluation)",
            "val": "validation instances.jsonl; default holds out a seeded tenth of --data",
            "test": "instances.jsonl to evaluate or predict",
            "embeddings": "word vectors, one 'token v1 ... vd' per line",
            "abstracts": "abstracts.tsv, 'title<TAB>text' per line",
            "index": "knowledge index file",
            "ckpt": "model checkpoint to load",
            "out": "output path",
        }
        for n in names:
            p.add_argument(f"--{n}", default=None, help=helps[n])

    def hyper(p):
        p.add_argument("--model", choices=VARIANTS, default=d.model, help="model variant")
        p.add_argument("--batch", type=_positive, default=d.batch, help="mini-batch size")
        p.add_argument("--epochs", type=_positive, default=d.epochs, help="maximum epochs")
        p.add_argument("--patience", type=_positive, default=d.patience,
                       help="epochs without validation improvement before stopping")
        p.add_argument("--answers-k", type=_positive, default=d.answers_k, help="answer vocabulary size")
        p.add_argument("--d-emb", type=_positive, default=d.d_emb,
                       help="word embedding size (overridden by --embeddings)")
        p.add_argument("--q-hidden", type=_positive, default=d.q_hidden, help="question LSTM size")
        p.add_argument("--c-hidden", type=_positive, default=d.c_hidden, help="caption LSTM size")
        p.add_argument("--attn-k", type=_positive, default=d.attn_k, help="caption attention width")
        p.add_argument("--measure-hidden", type=_positive, default=d.measure_hidden,
                       help="Measure hidden layer size")
        p.add_argument("--kb-topk", type=_positive, default=d.kb_topk, help="documents retrieved per question")

    def layout_flags(p):
        p.add_argument("--parse-mode", choices=("short", "longest"), default=d.parse_mode,
                       help="layout size when compiling parses")
        p.add_argument("--measure-for", choices=("none", "count", "yesno", "both"), default=d.measure_for,
                       help="question types answered through Measure")

    def common(p):
        p.add_argument("--metric", choices=("exact", "consensus"), default=d.metric, help="accuracy metric")
        p.add_argument("--seed", type=int, default=d.seed, help="seed for every random choice")

    p = sub.add_parser("train", help="train a model and write a checkpoint", formatter_class=fmt)
    files(p, "data", "val", "embeddings", "abstracts", "index", "out")
    p.add_argument("--metrics", default=None, help="per-epoch metrics log; None means <out>.metrics.log")
    hyper(p)
    layout_flags(p)
    common(p)

    for name, what in (("eval", "report accuracy of a checkpoint"),
                       ("predict", "write JSONL predictions with the top-5 answers")):
        p = sub.add_parser(name, help=what, formatter_class=fmt)
        files(p, "ckpt", "test", "data", "index", "abstracts", "out")
        common(p)

    p = sub.add_parser("compile-layout", help="print the layout of each question in a CoNLL file",
                       formatter_class=fmt)
    p.add_argument("--parse", default=None, help="CoNLL dependency parses, blank-line separated")
    p.add_argument("--mode", choices=("short", "longest"), default=d.parse_mode, help="layout size")
    p.add_argument("--measure-for", choices=("none", "count", "yesno", "both"), default=d.measure_for,
                   help="question types answered through Measure")

    p = sub.add_parser("kb-index", help="build a knowledge index from abstracts", formatter_class=fmt)
    files(p, "abstracts", "embeddings", "out")

    p = sub.add_parser("kb-query", help="rank documents for a question", formatter_class=fmt)
    files(p, "index")
    p.add_argument("--question", default=None, help="question text")
    p.add_argument("--k", type=_positive, default=d.kb_topk, help="documents to return")

    p = sub.add_parser("gen-synth", help="generate a synthetic shapes dataset", formatter_class=fmt)
    files(p, "out")
    p.add_argument("--n", type=_positive, default=200, help="number of instances")
    p.add_argument("--grid", type=_positive, default=5, help="grid height and width")
    p.add_argument("--channels", type=_positive, default=16, help="feature channels D")
    p.add_argument("--caption-rate", type=_rate, default=0.5,
                   help="probability that a caption contains the answer")
    p.add_argument("--seed", type=int, default=d.seed, help="seed for every random choice")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if not args.command:
            raise CliError("usage", "a command is required: " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args)
    except CliError as e:
        return _fail(e.kind, str(e))
    except FileNotFoundError as e:
        return _fail("missing_file", f"no such file: {e.filename}")
    except DimensionMismatch as e:
        return _fail("dimension_mismatch", str(e))
    except (CheckpointError, IndexFormatError) as e:
        return _fail("bad_checkpoint", str(e))
    except LayoutError as e:
        return _fail("uncompilable", str(e))
    except MalformedInput as e:
        return _fail("malformed_input", str(e))
    except ValueError as e:
        return _fail("malformed_input", str(e))
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail("internal", f"{type(e).__name__}: {e}")


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(message.split())}) + "\n")
    return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
