"""Strict span-based offset micro-F1, one metric family per task.

Every metric counts a prediction as correct only when its full key matches a
reference item exactly, with one-to-one matching (a duplicated identical
prediction is one TP plus one FP).  Counts are micro-aggregated over the
corpus before the ratios are taken.

Edge rule, documented on purpose: an empty corpus scored against an empty
corpus is perfect agreement, so precision = recall = F1 = 1.0.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .records import ExtractionRecord


@dataclass
class MetricReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        if p + r == 0.0:
            return 0.0
        return 2.0 * p * r / (p + r)


def _count(
    pred_keys: Iterable[Iterable[Hashable]],
    gold_keys: Iterable[Iterable[Hashable]],
) -> MetricReport:
    report = MetricReport()
    for pred, gold in zip(pred_keys, gold_keys):
        p, g = Counter(pred), Counter(gold)
        tp = sum(min(n, g[k]) for k, n in p.items())
        report.tp += tp
        report.fp += sum(p.values()) - tp
        report.fn += sum(g.values()) - tp
    return report


def _check_aligned(pred: Sequence, gold: Sequence, *extra: Sequence) -> None:
    lengths = {len(pred), len(gold), *(len(x) for x in extra)}
    if len(lengths) != 1:
        raise ValueError(f"corpus lists are not aligned: lengths {sorted(lengths)}")


def _entity_types(record: ExtractionRecord):
    types: dict = {}
    for span, label in record.entities:
        types.setdefault(span, set()).add(label)
    return {span: frozenset(labels) for span, labels in types.items()}


def entity_f1(pred: Sequence[ExtractionRecord], gold: Sequence[ExtractionRecord]) -> MetricReport:
    """TP iff (start, end, type) match a distinct reference entity."""
    _check_aligned(pred, gold)
    return _count(
        ([(s, e, t) for (s, e), t in r.entities] for r in pred),
        ([(s, e, t) for (s, e), t in r.entities] for r in gold),
    )


def _strict_relation_keys(record: ExtractionRecord):
    types = _entity_types(record)
    return [
        (label, subject, types.get(subject, frozenset()), obj, types.get(obj, frozenset()))
        for subject, label, obj in record.relations
    ]


def relation_strict_f1(pred: Sequence[ExtractionRecord], gold: Sequence[ExtractionRecord]) -> MetricReport:
    """TP iff relation type, both offsets, and both endpoint entity types match."""
    _check_aligned(pred, gold)
    return _count(
        (_strict_relation_keys(r) for r in pred),
        (_strict_relation_keys(r) for r in gold),
    )


def relation_triplet_f1(
    pred: Sequence[ExtractionRecord],
    gold: Sequence[ExtractionRecord],
    tokens: Sequence[Sequence[str]],
) -> MetricReport:
    """Boundary match: relation type plus subject/object surface strings."""
    _check_aligned(pred, gold, tokens)

    def keys(record: ExtractionRecord, words):
        def surface(span):
            return " ".join(words[span.start : span.end + 1])

        return [(label, surface(s), surface(o)) for s, label, o in record.relations]

    return _count(
        (keys(r, w) for r, w in zip(pred, tokens)),
        (keys(r, w) for r, w in zip(gold, tokens)),
    )


def event_f1(
    pred: Sequence[ExtractionRecord], gold: Sequence[ExtractionRecord]
) -> tuple[MetricReport, MetricReport]:
    """Trigger TP: (offsets, event type); argument TP: (offsets, role, event type)."""
    _check_aligned(pred, gold)

    def trigger_keys(record):
        return [(e.trigger, e.type) for e in record.events]

    def argument_keys(record):
        return [(span, role, e.type) for e in record.events for span, role in e.arguments]

    triggers = _count((trigger_keys(r) for r in pred), (trigger_keys(r) for r in gold))
    arguments = _count((argument_keys(r) for r in pred), (argument_keys(r) for r in gold))
    return triggers, arguments


def sentiment_triplet_f1(
    pred: Sequence[ExtractionRecord], gold: Sequence[ExtractionRecord]
) -> MetricReport:
    """TP iff aspect offsets, opinion offsets, and polarity all match."""
    _check_aligned(pred, gold)
    return _count(
        ([(a, pol, o) for a, pol, o in r.sentiments] for r in pred),
        ([(a, pol, o) for a, pol, o in r.sentiments] for r in gold),
    )


TASK_METRICS = {
    "entity": ("entity_f1",),
    "relation": ("entity_f1", "relation_strict_f1", "relation_triplet_f1"),
    "event": ("event_trigger_f1", "event_argument_f1"),
    "sentiment": ("entity_f1", "sentiment_triplet_f1"),
}


def evaluate_task(
    kind: str,
    pred: Sequence[ExtractionRecord],
    gold: Sequence[ExtractionRecord],
    tokens: Sequence[Sequence[str]],
) -> dict[str, MetricReport]:
    """All metrics that apply to one task kind."""
    if kind not in TASK_METRICS:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {sorted(TASK_METRICS)}")
    out: dict[str, MetricReport] = {}
    for name in TASK_METRICS[kind]:
        if name == "entity_f1":
            out[name] = entity_f1(pred, gold)
        elif name == "relation_strict_f1":
            out[name] = relation_strict_f1(pred, gold)
        elif name == "relation_triplet_f1":
            out[name] = relation_triplet_f1(pred, gold, tokens)
        elif name == "event_trigger_f1":
            out["event_trigger_f1"], out["event_argument_f1"] = event_f1(pred, gold)
        elif name == "event_argument_f1":
            continue
        elif name == "sentiment_triplet_f1":
            out[name] = sentiment_triplet_f1(pred, gold)
    return out


def primary_metric(kind: str) -> str:
    return {
        "entity": "entity_f1",
        "relation": "relation_strict_f1",
        "event": "event_argument_f1",
        "sentiment": "sentiment_triplet_f1",
    }[kind]


def format_table(reports: dict[str, MetricReport]) -> str:
    lines = [f"{'metric':<24} {'tp':>5} {'fp':>5} {'fn':>5} {'prec':>8} {'rec':>8} {'f1':>8}"]
    for name, rep in reports.items():
        lines.append(
            f"{name:<24} {rep.tp:>5} {rep.fp:>5} {rep.fn:>5} "
            f"{rep.precision:>8.4f} {rep.recall:>8.4f} {rep.f1:>8.4f}"
        )
    return "\n".join(lines)


def format_key_values(reports: dict[str, MetricReport]) -> str:
    lines = []
    for name, rep in reports.items():
        for field in ("tp", "fp", "fn"):
            lines.append(f"{name}.{field}={getattr(rep, field)}")
        for field in ("precision", "recall", "f1"):
            lines.append(f"{name}.{field}={getattr(rep, field):.10f}")
    return "\n".join(lines)
