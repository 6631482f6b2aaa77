"""Word-level vocabulary with the reserved ids the prompt layout relies on.

Reserved tokens come first and never collide with corpus words; the
``[LABEL-k]`` placeholders realize the label-name ablation (each label block
keeps its own distinguishable id even when label words are hidden).
"""

from __future__ import annotations

from typing import Iterable

PAD = "[PAD]"
UNK = "[UNK]"
SEP = "[SEP]"
DETECTION_TOKEN = "[D-TOK]"
CLASSIFICATION_TOKEN = "[C-TOK]"
ASSOCIATION_TOKEN = "[A-TOK]"

RESERVED = (PAD, UNK, SEP, DETECTION_TOKEN, CLASSIFICATION_TOKEN, ASSOCIATION_TOKEN)


def _placeholder(k: int) -> str:
    return f"[LABEL-{k}]"


class Vocabulary:
    """Frozen token <-> id map; unknown words fall back to ``[UNK]``."""

    def __init__(self, words: Iterable[str], n_label_placeholders: int = 0):
        self.n_label_placeholders = int(n_label_placeholders)
        tokens = list(RESERVED)
        tokens += [_placeholder(k) for k in range(self.n_label_placeholders)]
        for w in words:
            if w not in RESERVED and not w.startswith("[LABEL-"):
                tokens.append(w)
        self.id_to_token: list[str] = []
        self.token_to_id: dict[str, int] = {}
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.id_to_token)
                self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, self.token_to_id[UNK])

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def label_placeholder(self, k: int) -> int:
        if not 0 <= k < self.n_label_placeholders:
            raise ValueError(
                f"label placeholder {k} not reserved (have {self.n_label_placeholders})"
            )
        return self.token_to_id[_placeholder(k)]

    def to_dict(self) -> dict:
        return {
            "tokens": list(self.id_to_token),
            "n_label_placeholders": self.n_label_placeholders,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.n_label_placeholders = int(data["n_label_placeholders"])
        vocab.id_to_token = list(data["tokens"])
        vocab.token_to_id = {t: i for i, t in enumerate(vocab.id_to_token)}
        return vocab


def build_vocab(corpus_tokens: Iterable[Iterable[str]], extra_words: Iterable[str] = (),
                n_label_placeholders: int = 0) -> Vocabulary:
    """Deterministic vocabulary: reserved ids, placeholders, extra words in
    given order, then corpus words sorted lexicographically."""
    seen: set[str] = set()
    ordered: list[str] = []
    for w in extra_words:
        if w not in seen:
            seen.add(w)
            ordered.append(w)
    corpus: set[str] = set()
    for sent in corpus_tokens:
        corpus.update(sent)
    ordered += sorted(corpus - seen)
    return Vocabulary(ordered, n_label_placeholders=n_label_placeholders)
