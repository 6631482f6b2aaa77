"""Structural-table supervision and decoding.

Each schema owns one (N_x, N_x) table inside the score tensor; only its
spotting-designator cells carry meaning:

* detection table (first axis 0): every upper-triangular cell (q >= p) is a
  candidate span, 1 where a semantic role sits;
* classification table for label L: the (start, end) cells of the known
  spans, 1 where the span carries L;
* association table for label A: the interleaved (start_i, start_j) and
  (end_i, end_j) cells over ordered pairs of distinct spans, both 1 for a
  gold pair of type A.

Decoding applies the same rules in reverse with a threshold: spans whose
detection score passes, labels whose classification cell passes (multi-label
allowed, unlabeled spans dropped), pairs whose two interleaved cells both
pass and whose endpoint types honor the association label's bindings.
``brute_force_decode`` re-derives the record by exhaustive enumeration and
serves as the decoding oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .records import Event, ExtractionRecord, Span
from .schema import ENTITY_LIKE_KINDS, SchemaSet
from .scoring import ScoreTensor

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


@dataclass
class TargetTensor:
    """Binary supervision plus the validity mask of designator cells."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.valid.shape:
            raise ValueError(f"values {self.values.shape} vs valid {self.valid.shape}")
        if ((self.values > 0) & (self.valid == 0)).any():
            raise ValueError("positive target outside the validity mask")


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {threshold}")


def _trigger_label(schemas: SchemaSet) -> str | None:
    for label in schemas.classification:
        if label.kind == "trigger":
            return label.name
    return None


def gold_span_types(gold: ExtractionRecord, schemas: SchemaSet) -> dict[Span, set[str]]:
    """Map every gold semantic role to its classification labels.

    Relation and sentiment endpoints must already be typed through the
    entity list; events type their own trigger and argument spans.
    """
    known = {l.name for l in schemas.classification}
    typed: dict[Span, set[str]] = {}

    def add(span: Span, label: str) -> None:
        if label not in known:
            raise ValueError(f"label {label!r} is not a classification schema")
        typed.setdefault(Span(*span), set()).add(label)

    for span, label in gold.entities:
        add(span, label)
    trigger_label = _trigger_label(schemas)
    for event in gold.events:
        if trigger_label is None:
            raise ValueError("gold record has events but the schema has no trigger label")
        add(event.trigger, trigger_label)
        add(event.trigger, event.type)
        for span, role in event.arguments:
            add(span, role)
    for subject, label, obj in gold.relations:
        for endpoint in (subject, obj):
            if Span(*endpoint) not in typed:
                raise ValueError(
                    f"relation endpoint {tuple(endpoint)} is not among the typed gold spans"
                )
    for aspect, label, opinion in gold.sentiments:
        for endpoint in (aspect, opinion):
            if Span(*endpoint) not in typed:
                raise ValueError(
                    f"sentiment endpoint {tuple(endpoint)} is not among the typed gold spans"
                )
    return typed


def _gold_pairs(gold: ExtractionRecord, schemas: SchemaSet) -> list[tuple[Span, str, Span]]:
    pairs = [(Span(*s), label, Span(*o)) for s, label, o in gold.relations]
    pairs += [(Span(*a), label, Span(*o)) for a, label, o in gold.sentiments]
    ta_label = next((l.name for l in schemas.association if l.kind == "trigger_argument"), None)
    for event in gold.events:
        if ta_label is None:
            raise ValueError(
                "gold record has events but the schema has no trigger_argument association"
            )
        for span, _role in event.arguments:
            pairs.append((event.trigger, ta_label, span))
    return pairs


def build_target_tensor(gold: ExtractionRecord, schemas: SchemaSet, n_tokens: int) -> TargetTensor:
    gold.check(n_tokens)
    names = schemas.schema_names()
    index = {name: i for i, name in enumerate(names)}
    n_s = schemas.n_schemas
    values = np.zeros((n_s, n_tokens, n_tokens))
    valid = np.zeros((n_s, n_tokens, n_tokens))

    typed = gold_span_types(gold, schemas)
    spans = sorted(typed)

    valid[0] = np.triu(np.ones((n_tokens, n_tokens)))
    for span in spans:
        values[0, span.start, span.end] = 1.0

    for label in schemas.classification:
        r = index[label.name]
        for span in spans:
            valid[r, span.start, span.end] = 1.0
            if label.name in typed[span]:
                values[r, span.start, span.end] = 1.0

    assoc_rows = [index[label.name] for label in schemas.association]
    for i, a in enumerate(spans):
        for j, b in enumerate(spans):
            if i == j:
                continue
            for r in assoc_rows:
                valid[r, a.start, b.start] = 1.0
                valid[r, a.end, b.end] = 1.0
    for subject, label, obj in _gold_pairs(gold, schemas):
        if label not in index or schemas.kind_of(label) not in {"relation", "polarity", "trigger_argument"}:
            raise ValueError(f"association label {label!r} is not an association schema")
        r = index[label]
        values[r, subject.start, obj.start] = 1.0
        values[r, subject.end, obj.end] = 1.0

    return TargetTensor(values=values, valid=valid)


def target_as_scores(target: TargetTensor, low: float = 0.1, high: float = 0.9) -> np.ndarray:
    """Cast binary supervision to scores (0 -> low, 1 -> high)."""
    return np.where(target.values > 0, high, low)


def decode_detection(scores: ScoreTensor, threshold: float = DEFAULT_THRESHOLD) -> list[Span]:
    """All spans (q >= p) whose detection score passes; nesting retained."""
    _check_threshold(threshold)
    table = scores.values[0]
    hits = np.argwhere(np.triu(table > threshold))
    return [Span(int(p), int(q)) for p, q in hits]


def decode_classification(
    scores: ScoreTensor,
    spans: list[Span],
    schemas: SchemaSet,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[tuple[Span, str]]:
    _check_threshold(threshold)
    typed: list[tuple[Span, str]] = []
    for span in spans:
        for label in schemas.classification:
            if scores.table(label.name)[span.start, span.end] > threshold:
                typed.append((span, label.name))
    return typed


def decode_association(
    scores: ScoreTensor,
    typed_spans: list[tuple[Span, str]],
    schemas: SchemaSet,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[tuple[Span, str, Span]]:
    _check_threshold(threshold)
    types: dict[Span, set[str]] = {}
    for span, label in typed_spans:
        types.setdefault(span, set()).add(label)
    spans = sorted(types)
    out: list[tuple[Span, str, Span]] = []
    for label in schemas.association:
        table = scores.table(label.name)
        bound = schemas.bound_to(label.name)
        for subject in spans:
            for obj in spans:
                if subject == obj:
                    continue
                if bound and not (types[subject] & bound and types[obj] & bound):
                    continue
                if (
                    table[subject.start, obj.start] > threshold
                    and table[subject.end, obj.end] > threshold
                ):
                    out.append((subject, label.name, obj))
    return out


def assemble_record(
    spans: list[Span],
    typed_spans: list[tuple[Span, str]],
    associations: list[tuple[Span, str, Span]],
    schemas: SchemaSet,
) -> ExtractionRecord:
    types: dict[Span, set[str]] = {}
    for span, label in typed_spans:
        types.setdefault(span, set()).add(label)

    record = ExtractionRecord()
    for span in sorted(types):
        for label in sorted(types[span]):
            if schemas.kind_of(label) in ENTITY_LIKE_KINDS:
                record.entities.append((span, label))

    for subject, label, obj in associations:
        kind = schemas.kind_of(label)
        if kind == "relation":
            record.relations.append((subject, label, obj))
        elif kind == "polarity":
            record.sentiments.append((subject, label, obj))

    trigger_label = _trigger_label(schemas)
    role_labels = {l.name for l in schemas.classification if l.kind == "role"}
    links: dict[Span, list[Span]] = {}
    for subject, label, obj in associations:
        if schemas.kind_of(label) == "trigger_argument":
            links.setdefault(subject, []).append(obj)
    for span in sorted(types):
        event_types = sorted(
            label for label in types[span] if schemas.kind_of(label) == "event"
        )
        if not event_types:
            continue
        if trigger_label not in types[span]:
            log.warning(
                "span %s typed %s without the trigger label; event dropped",
                tuple(span), event_types,
            )
            continue
        arguments = set()
        for arg in links.get(span, ()):
            roles = sorted(types.get(arg, set()) & role_labels)
            if len(roles) > 1:
                log.warning(
                    "argument span %s carries several roles %s; keeping all",
                    tuple(arg), roles,
                )
            for role in roles:
                arguments.add((arg, role))
        for event_type in event_types:
            record.events.append(Event(event_type, span, frozenset(arguments)))
    return record


def decode_record(
    scores: ScoreTensor,
    schemas: SchemaSet,
    threshold: float = DEFAULT_THRESHOLD,
) -> ExtractionRecord:
    """Full decoding pipeline: detection -> classification -> association."""
    spans = decode_detection(scores, threshold)
    typed = decode_classification(scores, spans, schemas, threshold)
    associations = decode_association(scores, typed, schemas, threshold)
    return assemble_record(spans, typed, associations, schemas)


def brute_force_decode(
    scores: ScoreTensor,
    schemas: SchemaSet,
    threshold: float = DEFAULT_THRESHOLD,
) -> ExtractionRecord:
    """Oracle decoder: enumerate every cell, label, and ordered pair and apply
    the designator rules literally.  No shared code with the pipeline."""
    _check_threshold(threshold)
    n_x = scores.n_text
    names = scores.schema_order
    table_of = {name: scores.values[i] for i, name in enumerate(names)}
    kind_of = {l.name: l.kind for l in schemas.labels()}

    found: list[Span] = []
    for p in range(n_x):
        for q in range(n_x):
            if q >= p and scores.values[0, p, q] > threshold:
                found.append(Span(p, q))

    labels_of: dict[Span, set[str]] = {}
    for span in found:
        for label in schemas.classification:
            if table_of[label.name][span.start, span.end] > threshold:
                labels_of.setdefault(span, set()).add(label.name)
    kept = sorted(labels_of)

    pairs: list[tuple[Span, str, Span]] = []
    for label in schemas.association:
        partners = schemas.bound_to(label.name)
        for subject in kept:
            for obj in kept:
                if subject == obj:
                    continue
                if partners:
                    if not labels_of[subject] & partners:
                        continue
                    if not labels_of[obj] & partners:
                        continue
                table = table_of[label.name]
                if table[subject.start, obj.start] <= threshold:
                    continue
                if table[subject.end, obj.end] <= threshold:
                    continue
                pairs.append((subject, label.name, obj))

    record = ExtractionRecord()
    for span in kept:
        for label in sorted(labels_of[span]):
            if kind_of[label] in ENTITY_LIKE_KINDS:
                record.entities.append((span, label))
    for subject, label, obj in pairs:
        if kind_of[label] == "relation":
            record.relations.append((subject, label, obj))
        if kind_of[label] == "polarity":
            record.sentiments.append((subject, label, obj))
    trigger_label = _trigger_label(schemas)
    for span in kept:
        for event_type in sorted(labels_of[span]):
            if kind_of[event_type] != "event":
                continue
            if trigger_label not in labels_of[span]:
                continue
            arguments = set()
            for subject, label, obj in pairs:
                if kind_of[label] != "trigger_argument" or subject != span:
                    continue
                for role in labels_of.get(obj, set()):
                    if kind_of[role] == "role":
                        arguments.add((obj, role))
            record.events.append(Event(event_type, span, frozenset(arguments)))
    return record
