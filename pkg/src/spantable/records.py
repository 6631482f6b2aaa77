"""Extraction structures shared by every stage of the pipeline.

Index convention (single source of truth): spans are token-level,
``SPAN_INDEX_BASE``-based, and inclusive on both ends.  Raw corpus files in
the human-readable interchange format count from ``RAW_INDEX_BASE`` instead;
the converters in :mod:`spantable.data` do the shift exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

SPAN_INDEX_BASE = 0
SPAN_END_INCLUSIVE = True
RAW_INDEX_BASE = 1


class Span(NamedTuple):
    """Token span ``[start, end]``, both inclusive, 0-based."""

    start: int
    end: int

    def check(self, n_tokens: int) -> None:
        if not (0 <= self.start <= self.end < n_tokens):
            raise ValueError(
                f"span {tuple(self)} out of range for sentence of {n_tokens} tokens"
            )


@dataclass(frozen=True)
class Event:
    """One event group: typed trigger span plus role-labelled argument spans."""

    type: str
    trigger: Span
    arguments: frozenset[tuple[Span, str]]

    @classmethod
    def make(cls, type: str, trigger: Span, arguments) -> "Event":
        return cls(type, Span(*trigger), frozenset((Span(*s), r) for s, r in arguments))


@dataclass
class ExtractionRecord:
    """Decoded (or gold) structures for one sentence.

    ``entities`` holds (span, type) pairs, ``relations`` and ``sentiments``
    hold (subject/aspect span, label, object/opinion span) triples, and
    ``events`` holds :class:`Event` groups.  Equality is set-based: two
    records are equal when they describe the same structures regardless of
    list order.
    """

    entities: list[tuple[Span, str]] = field(default_factory=list)
    relations: list[tuple[Span, str, Span]] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    sentiments: list[tuple[Span, str, Span]] = field(default_factory=list)

    def as_sets(self):
        return (
            frozenset(self.entities),
            frozenset(self.relations),
            frozenset(self.events),
            frozenset(self.sentiments),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExtractionRecord):
            return NotImplemented
        return self.as_sets() == other.as_sets()

    def is_empty(self) -> bool:
        return not (self.entities or self.relations or self.events or self.sentiments)

    def all_spans(self) -> set[Span]:
        spans: set[Span] = set()
        spans.update(s for s, _ in self.entities)
        for s, _, o in self.relations:
            spans.update((s, o))
        for ev in self.events:
            spans.add(ev.trigger)
            spans.update(s for s, _ in ev.arguments)
        for a, _, o in self.sentiments:
            spans.update((a, o))
        return spans

    def check(self, n_tokens: int) -> None:
        for span in self.all_spans():
            span.check(n_tokens)
