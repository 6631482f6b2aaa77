"""Dataset serialization, raw-corpus converters, and synthetic fixtures.

Disk formats (all UTF-8, documented in the README):

* dataset JSONL: one document per line with 0-based inclusive token spans;
* raw JSONL: paper-style interchange with 1-based inclusive indices and
  surface strings, validated against the token slice they point at;
* column NER: one ``token TAG`` pair per line, blank line between sentences,
  BIO tags.

The fixture generators produce small deterministic corpora with known gold
structures for the overfit and property suites.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .autodiff import atomic_write_text
from .records import RAW_INDEX_BASE, Event, ExtractionRecord, Span
from .schema import LabelSchema, SchemaSet
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)


class ConversionError(ValueError):
    pass


@dataclass
class ExDocument:
    text: str
    tokens: list[str]
    task: str
    gold: ExtractionRecord = field(default_factory=ExtractionRecord)

    def check(self) -> None:
        if not self.tokens:
            raise ValueError("document has no tokens")
        self.gold.check(len(self.tokens))


def _span_to_json(span: Span) -> list[int]:
    return [int(span.start), int(span.end)]


def document_to_dict(doc: ExDocument) -> dict:
    gold = doc.gold
    return {
        "text": doc.text,
        "tokens": list(doc.tokens),
        "task": doc.task,
        "entities": [
            {"start": s.start, "end": s.end, "type": t} for s, t in gold.entities
        ],
        "relations": [
            {"subject": _span_to_json(s), "type": t, "object": _span_to_json(o)}
            for s, t, o in gold.relations
        ],
        "events": [
            {
                "type": e.type,
                "trigger": _span_to_json(e.trigger),
                "arguments": [
                    {"span": _span_to_json(s), "role": r}
                    for s, r in sorted(e.arguments)
                ],
            }
            for e in gold.events
        ],
        "sentiments": [
            {"aspect": _span_to_json(a), "polarity": t, "opinion": _span_to_json(o)}
            for a, t, o in gold.sentiments
        ],
    }


def document_from_dict(data: dict) -> ExDocument:
    gold = ExtractionRecord(
        entities=[(Span(e["start"], e["end"]), e["type"]) for e in data.get("entities", ())],
        relations=[
            (Span(*r["subject"]), r["type"], Span(*r["object"]))
            for r in data.get("relations", ())
        ],
        events=[
            Event.make(
                e["type"],
                Span(*e["trigger"]),
                [(Span(*a["span"]), a["role"]) for a in e.get("arguments", ())],
            )
            for e in data.get("events", ())
        ],
        sentiments=[
            (Span(*s["aspect"]), s["polarity"], Span(*s["opinion"]))
            for s in data.get("sentiments", ())
        ],
    )
    doc = ExDocument(
        text=data["text"], tokens=list(data["tokens"]), task=data.get("task", ""), gold=gold
    )
    doc.check()
    return doc


def write_jsonl(path, docs: Iterable[ExDocument]) -> None:
    text = "".join(json.dumps(document_to_dict(d), ensure_ascii=False) + "\n" for d in docs)
    atomic_write_text(path, text)


def read_jsonl(path) -> list[ExDocument]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                docs.append(document_from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ConversionError(f"{path}: line {lineno}: {exc}") from exc
    return docs


def convert_column_ner(
    lines: Iterable[str],
    label_map: dict[str, str] | None = None,
    task_name: str = "Entity Extraction",
) -> list[ExDocument]:
    """Parse column-format BIO data into documents.

    A dangling ``I-`` tag (no open run of the same type) is treated as ``B-``;
    the number of such repairs is logged.
    """
    label_map = label_map or {}
    docs: list[ExDocument] = []
    tokens: list[str] = []
    tags: list[str] = []
    repaired = 0

    def flush():
        nonlocal tokens, tags, repaired
        if not tokens:
            return
        entities: list[tuple[Span, str]] = []
        start, current = None, None

        def close(end_index: int):
            nonlocal start, current
            if start is not None:
                entities.append((Span(start, end_index), label_map.get(current, current)))
            start, current = None, None

        for i, tag in enumerate(tags):
            if tag.startswith("B-"):
                close(i - 1)
                start, current = i, tag[2:]
            elif tag.startswith("I-"):
                if current != tag[2:]:
                    repaired += 1
                    close(i - 1)
                    start, current = i, tag[2:]
            else:
                close(i - 1)
        close(len(tags) - 1)
        docs.append(
            ExDocument(
                text=" ".join(tokens),
                tokens=tokens,
                task=task_name,
                gold=ExtractionRecord(entities=entities),
            )
        )
        tokens, tags = [], []

    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        fields = stripped.split()
        if len(fields) < 2:
            raise ConversionError(f"line {lineno}: expected 'token TAG', got {stripped!r}")
        tokens.append(fields[0])
        tags.append(fields[-1])
    flush()
    if repaired:
        log.warning("repaired %d dangling I- tags while converting", repaired)
    return docs


def convert_column_ner_file(path, label_map: dict[str, str] | None = None,
                            task_name: str = "Entity Extraction") -> list[ExDocument]:
    with open(path, "r", encoding="utf-8") as fh:
        return convert_column_ner(fh, label_map=label_map, task_name=task_name)


def _raw_span(obj: dict, tokens: list[str], lineno: int, what: str) -> Span:
    try:
        start, end = int(obj["start"]), int(obj["end"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConversionError(f"line {lineno}: malformed {what} span: {obj!r}") from exc
    span = Span(start - RAW_INDEX_BASE, end - RAW_INDEX_BASE)
    if not (0 <= span.start <= span.end < len(tokens)):
        raise ConversionError(f"line {lineno}: {what} span {start}..{end} out of range")
    surface = obj.get("surface")
    if surface is not None:
        actual = " ".join(tokens[span.start : span.end + 1])
        if actual != surface:
            raise ConversionError(
                f"line {lineno}: {what} surface {surface!r} does not match tokens {actual!r}"
            )
    return span


def convert_generic_json(lines: Iterable[str]) -> list[ExDocument]:
    """Convert raw interchange records (1-based inclusive indices, surfaces
    validated) into documents."""
    docs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConversionError(f"line {lineno}: invalid JSON: {exc}") from exc
        tokens = data.get("tokens") or data["text"].split()
        record = ExtractionRecord()
        for ent in data.get("entities", ()):
            record.entities.append((_raw_span(ent, tokens, lineno, "entity"), ent["type"]))
        for rel in data.get("relations", ()):
            record.relations.append(
                (
                    _raw_span(rel["subject"], tokens, lineno, "subject"),
                    rel["type"],
                    _raw_span(rel["object"], tokens, lineno, "object"),
                )
            )
        for ev in data.get("events", ()):
            record.events.append(
                Event.make(
                    ev["type"],
                    _raw_span(ev["trigger"], tokens, lineno, "trigger"),
                    [
                        (_raw_span(arg, tokens, lineno, "argument"), arg["role"])
                        for arg in ev.get("arguments", ())
                    ],
                )
            )
        for st in data.get("sentiments", ()):
            record.sentiments.append(
                (
                    _raw_span(st["aspect"], tokens, lineno, "aspect"),
                    st["polarity"],
                    _raw_span(st["opinion"], tokens, lineno, "opinion"),
                )
            )
        docs.append(
            ExDocument(text=data["text"], tokens=list(tokens), task=data.get("task", ""), gold=record)
        )
    return docs


def convert_generic_json_file(path) -> list[ExDocument]:
    with open(path, "r", encoding="utf-8") as fh:
        return convert_generic_json(fh)


def vocab_for(docs: Sequence[ExDocument], schemas: SchemaSet) -> Vocabulary:
    return build_vocab(
        (d.tokens for d in docs),
        extra_words=schemas.prompt_words(),
        n_label_placeholders=len(schemas.labels()),
    )


def task_kind(schemas: SchemaSet) -> str:
    """Which task family a schema set describes (drives metric selection)."""
    assoc_kinds = {l.kind for l in schemas.association}
    if "trigger_argument" in assoc_kinds:
        return "event"
    if "polarity" in assoc_kinds:
        return "sentiment"
    if "relation" in assoc_kinds:
        return "relation"
    return "entity"


# --- synthetic fixtures ------------------------------------------------

_PEOPLE = ["Alice", "Bob", "Carol", "David", "Erika", "Frank"]
_PLACES = ["Paris", "Oslo", "Madrid", "Lisbon", "Vienna", "Dublin"]
_ORGS = [["Acme", "Corp"], ["Orbit", "Labs"], ["Nova", "Bank"], ["Delta", "Press"]]
_ASPECTS = [["duck", "salad"], ["pumpkin", "soup"], ["house", "wine"], ["berry", "tart"]]
_GOOD = ["excellent", "delicious", "superb"]
_BAD = ["bland", "awful", "stale"]


def fixture_schema(kind: str) -> SchemaSet:
    if kind == "entity":
        return SchemaSet(
            task_name="Entity Extraction",
            classification=(
                LabelSchema("Person", "entity"),
                LabelSchema("Location", "entity"),
                LabelSchema("Organization", "entity"),
            ),
        )
    if kind == "relation":
        return SchemaSet(
            task_name="Relation Extraction",
            classification=(
                LabelSchema("Person", "entity"),
                LabelSchema("Location", "entity"),
                LabelSchema("Organization", "entity"),
            ),
            association=(
                LabelSchema("live in", "relation"),
                LabelSchema("work for", "relation"),
                LabelSchema("located in", "relation"),
            ),
            bindings=frozenset(
                frozenset(pair)
                for pair in (
                    ("live in", "Person"),
                    ("live in", "Location"),
                    ("work for", "Person"),
                    ("work for", "Organization"),
                    ("located in", "Organization"),
                    ("located in", "Location"),
                )
            ),
        )
    if kind == "event":
        return SchemaSet(
            task_name="Event Extraction",
            classification=(
                LabelSchema("Trigger", "trigger"),
                LabelSchema("Victim", "role"),
                LabelSchema("Person", "role"),
                LabelSchema("Place", "role"),
                LabelSchema("Injure", "event"),
                LabelSchema("Born", "event"),
            ),
            association=(LabelSchema("Trigger-Argument", "trigger_argument"),),
            bindings=frozenset(
                frozenset(pair)
                for pair in (
                    ("Injure", "Trigger"),
                    ("Injure", "Victim"),
                    ("Injure", "Place"),
                    ("Born", "Trigger"),
                    ("Born", "Person"),
                    ("Born", "Place"),
                    ("Trigger-Argument", "Trigger"),
                    ("Trigger-Argument", "Victim"),
                    ("Trigger-Argument", "Person"),
                    ("Trigger-Argument", "Place"),
                )
            ),
        )
    if kind == "sentiment":
        return SchemaSet(
            task_name="Sentiment Extraction",
            classification=(
                LabelSchema("Aspect", "aspect"),
                LabelSchema("Opinion", "opinion"),
            ),
            association=(
                LabelSchema("Positive", "polarity"),
                LabelSchema("Negative", "polarity"),
            ),
            bindings=frozenset(
                frozenset(pair)
                for pair in (
                    ("Positive", "Aspect"),
                    ("Positive", "Opinion"),
                    ("Negative", "Aspect"),
                    ("Negative", "Opinion"),
                )
            ),
        )
    raise ValueError(f"unknown fixture kind {kind!r}")


def _entity_doc(rng: random.Random, task: str) -> ExDocument:
    shape = rng.randrange(3)
    person = rng.choice(_PEOPLE)
    place = rng.choice(_PLACES)
    org = rng.choice(_ORGS)
    if shape == 0:
        tokens = [person, "visited", place, "."]
        entities = [(Span(0, 0), "Person"), (Span(2, 2), "Location")]
    elif shape == 1:
        tokens = [person, "joined", *org, "in", place, "."]
        entities = [
            (Span(0, 0), "Person"),
            (Span(2, 3), "Organization"),
            (Span(5, 5), "Location"),
        ]
    else:
        # nested: the city inside the institute name stays a Location
        tokens = ["the", place, "Institute", "hired", person, "."]
        entities = [
            (Span(1, 2), "Organization"),
            (Span(1, 1), "Location"),
            (Span(4, 4), "Person"),
        ]
    return ExDocument(" ".join(tokens), tokens, task, ExtractionRecord(entities=entities))


def _relation_doc(rng: random.Random, task: str) -> ExDocument:
    shape = rng.randrange(3)
    person = rng.choice(_PEOPLE)
    place = rng.choice(_PLACES)
    org = rng.choice(_ORGS)
    if shape == 0:
        tokens = [person, "lives", "in", place, "."]
        entities = [(Span(0, 0), "Person"), (Span(3, 3), "Location")]
        relations = [(Span(0, 0), "live in", Span(3, 3))]
    elif shape == 1:
        tokens = [person, "works", "for", *org, "."]
        entities = [(Span(0, 0), "Person"), (Span(3, 4), "Organization")]
        relations = [(Span(0, 0), "work for", Span(3, 4))]
    else:
        tokens = [person, "of", *org, "lives", "in", place, "."]
        entities = [
            (Span(0, 0), "Person"),
            (Span(2, 3), "Organization"),
            (Span(6, 6), "Location"),
        ]
        relations = [
            (Span(0, 0), "live in", Span(6, 6)),
            (Span(2, 3), "located in", Span(6, 6)),
        ]
    return ExDocument(
        " ".join(tokens), tokens, task,
        ExtractionRecord(entities=entities, relations=relations),
    )


def _event_doc(rng: random.Random, task: str) -> ExDocument:
    shape = rng.randrange(2)
    person = rng.choice(_PEOPLE)
    place = rng.choice(_PLACES)
    if shape == 0:
        tokens = [person, "was", "wounded", "near", place, "."]
        event = Event.make(
            "Injure", Span(2, 2), [(Span(0, 0), "Victim"), (Span(4, 4), "Place")]
        )
    else:
        tokens = [person, "was", "born", "in", place, "."]
        event = Event.make(
            "Born", Span(2, 2), [(Span(0, 0), "Person"), (Span(4, 4), "Place")]
        )
    return ExDocument(" ".join(tokens), tokens, task, ExtractionRecord(events=[event]))


def _sentiment_doc(rng: random.Random, task: str) -> ExDocument:
    shape = rng.randrange(2)
    aspect = rng.choice(_ASPECTS)
    if shape == 0:
        word = rng.choice(_GOOD)
        polarity = "Positive"
    else:
        word = rng.choice(_BAD)
        polarity = "Negative"
    tokens = ["the", *aspect, "was", word, "."]
    record = ExtractionRecord(
        entities=[(Span(1, 2), "Aspect"), (Span(4, 4), "Opinion")],
        sentiments=[(Span(1, 2), polarity, Span(4, 4))],
    )
    return ExDocument(" ".join(tokens), tokens, task, record)


_FIXTURE_BUILDERS = {
    "entity": _entity_doc,
    "relation": _relation_doc,
    "event": _event_doc,
    "sentiment": _sentiment_doc,
}


def make_fixture(kind: str, size: int, seed: int = 0) -> list[ExDocument]:
    """Deterministic synthetic dataset of one task kind."""
    if size <= 0:
        raise ValueError("fixture size must be positive")
    if kind not in _FIXTURE_BUILDERS:
        raise ValueError(f"unknown fixture kind {kind!r}")
    rng = random.Random(seed)
    task = fixture_schema(kind).task_name
    return [_FIXTURE_BUILDERS[kind](rng, task) for _ in range(size)]


def fixtures_dir() -> Path:
    return Path(__file__).resolve().parent.parent.parent / "fixtures"
