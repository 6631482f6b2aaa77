"""Whole-model wiring: prompt -> encoder -> scoring head, plus checkpointing.

A model bundles the encoder and scoring parameters with everything needed to
reproduce its inputs: the schema set, the vocabulary, and the prompt/ablation
settings.  Checkpoints round-trip bit-exactly (parameters travel as
little-endian float64 bytes, see :mod:`spantable.autodiff`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, atomic_write_text
from .encoder import EncoderConfig, encode, init_encoder_params
from .records import ExtractionRecord
from .schema import (
    DEFAULT_MAX_LENGTH,
    DEFAULT_TEXT_OFFSET,
    SchemaSet,
    UnifiedInput,
    build_prompt,
)
from .scoring import (
    ScoreTensor,
    init_scoring_params,
    multihead_selection_score,
    triaffine_score,
)
from .vocab import Vocabulary

_MODEL_FORMAT = "spantable-model"
_MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    hidden_size: int = 64
    heads: int = 4
    ffn_hidden: int = 256
    max_length: int = DEFAULT_MAX_LENGTH
    text_offset: int = DEFAULT_TEXT_OFFSET
    max_position: int = 640
    seed: int = 0
    use_sam: bool = True
    use_triaffine: bool = True
    use_label_names: bool = True
    text_sees_labels: bool = False

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            layers=self.layers,
            hidden_size=self.hidden_size,
            heads=self.heads,
            ffn_hidden=self.ffn_hidden,
            vocab_size=vocab_size,
            max_position=self.max_position,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class Model:
    config: ModelConfig
    schemas: SchemaSet
    vocab: Vocabulary
    params: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        if not self.params:
            enc_cfg = self.config.encoder_config(len(self.vocab))
            self.params = init_encoder_params(enc_cfg)
            self.params.update(
                init_scoring_params(self.config.hidden_size, seed=self.config.seed + 1)
            )

    def prompt(self, tokens: list[str]) -> UnifiedInput:
        return build_prompt(
            self.schemas,
            self.vocab.ids(tokens),
            self.vocab,
            max_length=self.config.max_length,
            text_offset=self.config.text_offset,
            sam_enabled=self.config.use_sam,
            text_sees_labels=self.config.text_sees_labels,
            use_label_names=self.config.use_label_names,
        )

    def score(self, inp: UnifiedInput) -> Tensor:
        """Forward pass to the (N_s, N_x, N_x) score node (graph attached)."""
        enc = encode(inp, self.params, self.config.encoder_config(len(self.vocab)))
        if self.config.use_triaffine:
            return triaffine_score(enc, self.params)
        return multihead_selection_score(enc, self.params)

    def score_tokens(self, tokens: list[str]) -> ScoreTensor:
        node = self.score(self.prompt(tokens))
        return ScoreTensor(values=node.value, schema_order=self.schemas.schema_names())

    def predict(self, tokens: list[str], threshold: float = 0.5) -> ExtractionRecord:
        from .tables import decode_record

        return decode_record(self.score_tokens(tokens), self.schemas, threshold)

    def clone_initial(self, seed: int | None = None) -> "Model":
        config = self.config if seed is None else replace(self.config, seed=seed)
        return Model(config=config, schemas=self.schemas, vocab=self.vocab)

    def save(self, path) -> None:
        payload = {
            "format": _MODEL_FORMAT,
            "version": _MODEL_VERSION,
            "config": self.config.to_dict(),
            "schemas": self.schemas.to_dict(),
            "vocab": self.vocab.to_dict(),
            "checkpoint": ad.params_to_dict(self.params),
        }
        atomic_write_text(path, json.dumps(payload))

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != _MODEL_FORMAT:
            raise ValueError(f"not a model checkpoint: format={payload.get('format')!r}")
        if payload.get("version") != _MODEL_VERSION:
            raise ValueError(f"unsupported model version {payload.get('version')!r}")
        return cls(
            config=ModelConfig.from_dict(payload["config"]),
            schemas=SchemaSet.from_dict(payload["schemas"]),
            vocab=Vocabulary.from_dict(payload["vocab"]),
            params=ad.params_from_dict(payload["checkpoint"]),
        )


def trainable_parameters(model: Model) -> dict[str, Tensor]:
    """Parameters reachable from the active head (the inactive head's maps
    receive no gradient and stay untouched)."""
    if model.config.use_triaffine:
        skip = ("mh.",)
    else:
        skip = ("tri.",)
    return {k: v for k, v in model.params.items() if not k.startswith(skip)}
