"""Command-line entry point.

Sub-commands: ``convert``, ``train``, ``predict``, ``eval``, ``bench``,
``gradcheck``.  Every run that produces an output file also writes a
``<output>.manifest.json`` next to it with the resolved configuration, seed,
and versions, and all files are written atomically.  Log verbosity comes
from ``--verbose`` or the ``SPANTABLE_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .autodiff import atomic_write_text
from .bench import run_bench
from .data import (
    ConversionError,
    convert_column_ner_file,
    convert_generic_json_file,
    read_jsonl,
    task_kind,
    write_jsonl,
)
from .estimator import SpanTableExtractor
from .gradcheck import GradCheckConfig, run_gradcheck
from .metrics import evaluate_task, format_key_values, format_table
from .model import Model
from .schema import load_schema
from .training import write_trace

log = logging.getLogger("spantable")


def _setup_logging(verbose: bool) -> None:
    level = os.environ.get("SPANTABLE_LOG", "DEBUG" if verbose else "INFO")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _write_manifest(output_path: str, args: argparse.Namespace) -> None:
    manifest = {
        "command": args.command,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("command", "func")},
        "versions": {
            "spantable": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    atomic_write_text(output_path + ".manifest.json", json.dumps(manifest, indent=2, default=str))


def cmd_convert(args) -> int:
    label_map = None
    if args.label_map:
        with open(args.label_map, "r", encoding="utf-8") as fh:
            label_map = json.load(fh)
    if args.format == "column-ner":
        docs = convert_column_ner_file(args.input, label_map=label_map, task_name=args.task_name)
    else:
        docs = convert_generic_json_file(args.input)
    if not docs:
        log.warning("input %s produced no documents", args.input)
    write_jsonl(args.output, docs)
    _write_manifest(args.output, args)
    log.info("wrote %d documents to %s", len(docs), args.output)
    return 0


def cmd_train(args) -> int:
    docs = read_jsonl(args.data)
    est = SpanTableExtractor(
        schema=args.schema,
        layers=args.layers,
        hidden_size=args.hidden_size,
        heads=args.heads,
        ffn_hidden=args.ffn_hidden,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        warmup_rate=args.warmup_rate,
        threshold=args.threshold,
        use_sam=not args.no_sam,
        use_triaffine=not args.no_triaffine,
        use_label_names=not args.no_label_names,
        stop_at_f1=args.stop_at_f1,
        seed=args.seed,
    )
    est.fit(docs)
    est.save(args.output)
    _write_manifest(args.output, args)
    if args.trace:
        write_trace(args.trace, est.trace_)
    last = est.trace_[-1] if est.trace_ else None
    if last is not None:
        log.info(
            "finished at epoch %d: loss %.4f, %s %.4f",
            last.epoch, last.mean_loss, est.train_result_.metric_name, last.f1,
        )
    return 0


def cmd_predict(args) -> int:
    est = SpanTableExtractor.load(args.model, threshold=args.threshold)
    docs = read_jsonl(args.data)
    predictions = est.predict(docs)
    for doc, record in zip(docs, predictions):
        doc.gold = record
    write_jsonl(args.output, docs)
    _write_manifest(args.output, args)
    log.info("wrote %d predictions to %s", len(docs), args.output)
    return 0


def cmd_eval(args) -> int:
    pred_docs = read_jsonl(args.pred)
    gold_docs = read_jsonl(args.gold)
    kind = args.task
    if kind is None:
        kind = task_kind(load_schema(args.schema)) if args.schema else "entity"
    reports = evaluate_task(
        kind,
        [d.gold for d in pred_docs],
        [d.gold for d in gold_docs],
        [d.tokens for d in gold_docs],
    )
    table = format_table(reports)
    print(table)
    if args.output:
        atomic_write_text(args.output, table + "\n\n" + format_key_values(reports) + "\n")
        _write_manifest(args.output, args)
    return 0


def cmd_bench(args) -> int:
    model = Model.load(args.model)
    docs = read_jsonl(args.data)
    if args.batch > 1:
        docs = docs[: args.batch * max(1, len(docs) // args.batch)]
    report = run_bench(
        model, docs, threshold=args.threshold, warmup=args.warmup, repeats=args.repeats
    )
    payload = json.dumps(report.to_dict(), indent=2)
    print(payload)
    if args.output:
        atomic_write_text(args.output, payload + "\n")
        _write_manifest(args.output, args)
    return 0


def cmd_gradcheck(args) -> int:
    config = GradCheckConfig(
        hidden_size=args.hidden_size,
        layers=args.layers,
        heads=args.heads,
        ffn_hidden=args.ffn_hidden,
        text_len=args.text_len,
        seed=args.seed,
        step=args.step,
        tolerance=args.tolerance,
        use_triaffine=not args.no_triaffine,
    )
    error = run_gradcheck(config)
    passed = error < config.tolerance
    print(f"max relative error: {error:.3e} ({'PASS' if passed else 'FAIL'} at {config.tolerance:g})")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spantable",
        description="Schema-prompted span-table information extraction.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert raw corpora to the dataset JSONL format")
    p.add_argument("--format", choices=("column-ner", "json"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--task-name", default="Entity Extraction")
    p.add_argument("--label-map", help="JSON file mapping tag suffixes to label names")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--trace", help="CSV file for the per-epoch loss/F1 trace")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden-size", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ffn-hidden", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--warmup-rate", type=float, default=0.06)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--stop-at-f1", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-sam", action="store_true", help="disable the schema attention mask")
    p.add_argument("--no-triaffine", action="store_true",
                   help="replace the triaffine head with multi-head selection")
    p.add_argument("--no-label-names", action="store_true",
                   help="replace label words with reserved placeholders")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="strict micro-F1 of predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--task", choices=("entity", "relation", "event", "sentiment"))
    p.add_argument("--schema", help="schema file to infer the task kind from")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="sentences/second of single-pass decoding")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss path")
    p.add_argument("--hidden-size", type=int, default=8)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--ffn-hidden", type=int, default=16)
    p.add_argument("--text-len", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--no-triaffine", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConversionError as exc:
        log.error("conversion failed: %s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return 2
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
