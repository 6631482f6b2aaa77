"""Schema sets and the unified prompt: layout, position ids, attention mask.

A task is described declaratively by a :class:`SchemaSet`: one detection
schema (the task phrase), an ordered list of classification labels, an
ordered list of association labels, and undirected bindings saying which
labels are allowed to see each other.  ``build_prompt`` turns a schema set
plus a tokenized sentence into the model input:

    [D-TOK] task words  [C-TOK] label ...  [A-TOK] label ...  [SEP] text [SEP]

Position ids restart at 0 inside every prompt block, so equally long label
blocks are positionally indistinguishable and the text never moves when the
label inventory changes (text positions start at a fixed offset).  The
attention mask keeps unrelated labels invisible to each other while bound
labels, the task block, and the separators stay mutually reachable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vocab import (
    ASSOCIATION_TOKEN,
    CLASSIFICATION_TOKEN,
    DETECTION_TOKEN,
    SEP,
    Vocabulary,
)

CLASSIFICATION_KINDS = frozenset({"entity", "aspect", "opinion", "trigger", "role", "event"})
ASSOCIATION_KINDS = frozenset({"relation", "polarity", "trigger_argument"})

# entity-like kinds populate ExtractionRecord.entities when decoded
ENTITY_LIKE_KINDS = frozenset({"entity", "aspect", "opinion"})

DEFAULT_MAX_LENGTH = 512
DEFAULT_TEXT_OFFSET = 64


@dataclass(frozen=True)
class LabelSchema:
    name: str
    kind: str


@dataclass(frozen=True)
class SchemaSet:
    """Label inventory of one task plus the binding edges between labels."""

    task_name: str
    classification: tuple[LabelSchema, ...] = ()
    association: tuple[LabelSchema, ...] = ()
    bindings: frozenset[frozenset[str]] = frozenset()
    detection: str = ""

    def __post_init__(self):
        if not self.detection:
            object.__setattr__(self, "detection", self.task_name)
        object.__setattr__(self, "classification", tuple(self.classification))
        object.__setattr__(self, "association", tuple(self.association))
        object.__setattr__(
            self, "bindings", frozenset(frozenset(pair) for pair in self.bindings)
        )
        names = [l.name for l in self.classification] + [l.name for l in self.association]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate label names in schema set: {names}")
        for label in self.classification:
            if label.kind not in CLASSIFICATION_KINDS:
                raise ValueError(f"unknown classification kind {label.kind!r}")
        for label in self.association:
            if label.kind not in ASSOCIATION_KINDS:
                raise ValueError(f"unknown association kind {label.kind!r}")
        known = set(names)
        for pair in self.bindings:
            if len(pair) != 2:
                raise ValueError(f"binding must pair two distinct labels: {sorted(pair)}")
            for name in pair:
                if name not in known:
                    raise ValueError(f"binding endpoint {name!r} is not a schema label")

    @property
    def n_schemas(self) -> int:
        return 1 + len(self.classification) + len(self.association)

    def schema_names(self) -> tuple[str, ...]:
        return (
            self.detection,
            *(l.name for l in self.classification),
            *(l.name for l in self.association),
        )

    def labels(self) -> tuple[LabelSchema, ...]:
        return self.classification + self.association

    def kind_of(self, name: str) -> str:
        for label in self.labels():
            if label.name == name:
                return label.kind
        raise KeyError(name)

    def bound_to(self, name: str) -> frozenset[str]:
        """Labels sharing a binding edge with ``name`` (empty set if none)."""
        out = set()
        for pair in self.bindings:
            if name in pair:
                out.update(pair - {name})
        return frozenset(out)

    def prompt_words(self) -> list[str]:
        words = self.detection.split()
        for label in self.labels():
            words += label.name.split()
        return words

    def to_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "detection": self.detection,
            "labels": [{"name": l.name, "kind": l.kind} for l in self.classification],
            "associations": [{"name": l.name, "kind": l.kind} for l in self.association],
            "bindings": sorted(sorted(pair) for pair in self.bindings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SchemaSet":
        return cls(
            task_name=data["task_name"],
            classification=tuple(
                LabelSchema(d["name"], d["kind"]) for d in data.get("labels", ())
            ),
            association=tuple(
                LabelSchema(d["name"], d["kind"]) for d in data.get("associations", ())
            ),
            bindings=frozenset(
                frozenset(pair) for pair in data.get("bindings", ())
            ),
            detection=data.get("detection", ""),
        )


def load_schema(path) -> SchemaSet:
    with open(path, "r", encoding="utf-8") as fh:
        return SchemaSet.from_dict(json.load(fh))


def save_schema(schemas: SchemaSet, path) -> None:
    Path(path).write_text(json.dumps(schemas.to_dict(), indent=2) + "\n", encoding="utf-8")


# block ids: 0 = task block, 1..len(labels) = label blocks, len(labels)+1 = text
@dataclass
class UnifiedInput:
    token_ids: np.ndarray
    positions: np.ndarray
    block_ids: np.ndarray
    is_separator: np.ndarray
    mask: np.ndarray
    schema_anchors: np.ndarray
    text_range: np.ndarray

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def n_text(self) -> int:
        return len(self.text_range)


def assign_positions(block_ids: np.ndarray, text_offset: int = DEFAULT_TEXT_OFFSET) -> np.ndarray:
    """Block-local position ids: every prompt block restarts at 0, the text
    block (separators included) runs from ``text_offset`` upward."""
    block_ids = np.asarray(block_ids)
    text_block = int(block_ids.max())
    positions = np.zeros(len(block_ids), dtype=np.int64)
    counter = 0
    prev_block = -1
    for i, b in enumerate(block_ids):
        if b != prev_block:
            counter = text_offset if b == text_block else 0
            prev_block = b
        positions[i] = counter
        counter += 1
    for b in range(text_block):
        length = int((block_ids == b).sum())
        if length >= text_offset:
            raise ValueError(
                f"prompt block {b} has {length} tokens; raise text_offset above {length}"
            )
    return positions


def build_attention_mask(
    block_ids: np.ndarray,
    is_separator: np.ndarray,
    schemas: SchemaSet,
    sam_enabled: bool = True,
    text_sees_labels: bool = False,
) -> np.ndarray:
    """Directed attention-permission matrix (row = query, column = key).

    Cell rules, each cell decided by exactly one of:
      (a) same block: visible
      (b) task block involved: visible
      (e) separator involved: visible
      (c) label/text: label sees text; text sees labels only when
          ``text_sees_labels``
      (d) two different label blocks: visible iff a binding pairs them

    With ``sam_enabled=False`` every permission is granted.
    """
    block_ids = np.asarray(block_ids)
    n = len(block_ids)
    if not sam_enabled:
        return np.ones((n, n), dtype=np.int8)

    is_separator = np.asarray(is_separator, dtype=bool)
    text_block = int(block_ids.max())
    labels = schemas.labels()
    # label block b hosts labels[b - 1]
    bound = np.zeros((text_block + 1, text_block + 1), dtype=bool)
    name_to_block = {label.name: b + 1 for b, label in enumerate(labels)}
    for pair in schemas.bindings:
        a, b = sorted(pair)
        ia, ib = name_to_block[a], name_to_block[b]
        bound[ia, ib] = bound[ib, ia] = True

    mask = np.full((n, n), -1, dtype=np.int8)
    row = block_ids[:, None]
    col = block_ids[None, :]
    same_block = row == col
    task = (row == 0) | (col == 0)
    sep = is_separator[:, None] | is_separator[None, :]
    is_label_row = (row > 0) & (row < text_block)
    is_label_col = (col > 0) & (col < text_block)
    label_to_text = is_label_row & (col == text_block)
    text_to_label = (row == text_block) & is_label_col
    label_to_label = is_label_row & is_label_col & ~same_block

    def assign(cells: np.ndarray, value) -> None:
        todo = cells & (mask == -1)
        if isinstance(value, np.ndarray):
            mask[todo] = value[todo]
        else:
            mask[todo] = value

    assign(same_block, 1)
    assign(task, 1)
    assign(sep, 1)
    assign(label_to_text, 1)
    assign(text_to_label, 1 if text_sees_labels else 0)
    assign(label_to_label, bound[block_ids][:, block_ids].astype(np.int8))
    if (mask == -1).any():
        raise AssertionError("attention mask has cells not covered by rules (a)-(e)")
    return mask


def build_prompt(
    schemas: SchemaSet,
    text_token_ids,
    vocab: Vocabulary,
    *,
    max_length: int = DEFAULT_MAX_LENGTH,
    text_offset: int = DEFAULT_TEXT_OFFSET,
    sam_enabled: bool = True,
    text_sees_labels: bool = False,
    use_label_names: bool = True,
) -> UnifiedInput:
    """Assemble the unified input for one sentence.

    Over-length inputs lose text tokens only, never schema tokens; a prompt
    that leaves no room for text raises.  With ``use_label_names=False`` each
    label's words are replaced by that label's reserved placeholder id,
    preserving the block structure.
    """
    text_token_ids = list(text_token_ids)
    if not text_token_ids:
        raise ValueError("cannot build a prompt for empty text")

    token_ids: list[int] = []
    block_ids: list[int] = []
    anchors: list[int] = []

    def add_block(identifier_id: int, word_ids: list[int], block: int) -> None:
        anchors.append(len(token_ids))
        token_ids.append(identifier_id)
        token_ids.extend(word_ids)
        block_ids.extend([block] * (1 + len(word_ids)))

    add_block(vocab.id(DETECTION_TOKEN), vocab.ids(schemas.detection.split()), 0)
    labels = schemas.labels()
    n_class = len(schemas.classification)
    for k, label in enumerate(labels):
        identifier = CLASSIFICATION_TOKEN if k < n_class else ASSOCIATION_TOKEN
        if use_label_names:
            word_ids = vocab.ids(label.name.split())
        else:
            word_ids = [vocab.label_placeholder(k)]
        add_block(vocab.id(identifier), word_ids, k + 1)

    room = max_length - len(token_ids) - 2
    if room < 1:
        raise ValueError(
            f"prompt of {len(token_ids)} schema tokens leaves no room for text "
            f"within max_length={max_length}"
        )
    if len(text_token_ids) > room:
        text_token_ids = text_token_ids[:room]

    text_block = len(labels) + 1
    sep_id = vocab.id(SEP)
    is_separator = np.zeros(len(token_ids) + len(text_token_ids) + 2, dtype=bool)
    is_separator[len(token_ids)] = True
    is_separator[-1] = True
    text_start = len(token_ids) + 1
    token_ids = token_ids + [sep_id] + text_token_ids + [sep_id]
    block_ids = block_ids + [text_block] * (len(text_token_ids) + 2)

    block_arr = np.asarray(block_ids, dtype=np.int64)
    positions = assign_positions(block_arr, text_offset=text_offset)
    mask = build_attention_mask(
        block_arr, is_separator, schemas,
        sam_enabled=sam_enabled, text_sees_labels=text_sees_labels,
    )
    return UnifiedInput(
        token_ids=np.asarray(token_ids, dtype=np.int64),
        positions=positions,
        block_ids=block_arr,
        is_separator=is_separator,
        mask=mask,
        schema_anchors=np.asarray(anchors, dtype=np.int64),
        text_range=np.arange(text_start, text_start + len(text_token_ids), dtype=np.int64),
    )
