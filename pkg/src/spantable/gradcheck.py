"""End-to-end gradient check over the full loss path.

Builds a tiny model (prompt, masked encoder, scoring head, masked BCE) on a
synthetic two-entity one-relation sentence and compares analytic gradients
of every trainable parameter against central finite differences.

Parameters are re-drawn at a generic O(0.1)..O(0.3) scale before checking:
at training-init scale most true gradients sit below the floating-point
noise floor of the finite differences themselves, which would measure the
probe rather than the backward rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, grad_check
from .data import ExDocument
from .model import Model, ModelConfig
from .records import ExtractionRecord, Span
from .schema import LabelSchema, SchemaSet
from .tables import build_target_tensor
from .training import masked_loss
from .vocab import build_vocab


@dataclass(frozen=True)
class GradCheckConfig:
    hidden_size: int = 8
    layers: int = 2
    heads: int = 2
    ffn_hidden: int = 16
    text_len: int = 6
    text_offset: int = 16
    seed: int = 0
    step: float = 1e-5
    tolerance: float = 1e-4
    use_triaffine: bool = True


def _fixture(text_len: int) -> tuple[SchemaSet, ExDocument]:
    schemas = SchemaSet(
        task_name="Extraction",
        classification=(LabelSchema("Alpha", "entity"), LabelSchema("Beta", "entity")),
        association=(LabelSchema("linked", "relation"),),
        bindings=frozenset({frozenset({"linked", "Alpha"}), frozenset({"linked", "Beta"})}),
    )
    tokens = [f"w{i}" for i in range(text_len)]
    first = Span(0, min(1, text_len - 1))
    second = Span(min(3, text_len - 1), min(4, text_len - 1))
    gold = ExtractionRecord(
        entities=[(first, "Alpha"), (second, "Beta")],
        relations=[(first, "linked", second)] if second.start > first.end else [],
    )
    return schemas, ExDocument(" ".join(tokens), tokens, schemas.task_name, gold)


def build_check_model(config: GradCheckConfig) -> tuple[Model, ExDocument]:
    schemas, doc = _fixture(config.text_len)
    vocab = build_vocab(
        [doc.tokens],
        extra_words=schemas.prompt_words(),
        n_label_placeholders=len(schemas.labels()),
    )
    model_config = ModelConfig(
        layers=config.layers,
        hidden_size=config.hidden_size,
        heads=config.heads,
        ffn_hidden=config.ffn_hidden,
        text_offset=config.text_offset,
        max_position=config.text_offset + config.text_len + 2,
        seed=config.seed,
        use_triaffine=config.use_triaffine,
    )
    return Model(config=model_config, schemas=schemas, vocab=vocab), doc


def randomize_for_check(params: dict[str, Tensor], seed: int) -> None:
    """Move parameters to a generic point: norms near identity, the trilinear
    tensor small enough to keep scores off the sigmoid tails, everything else
    at O(0.3)."""
    rng = np.random.default_rng(seed)
    for name, p in params.items():
        shape = p.value.shape
        if name.endswith(".gain"):
            p.value[...] = rng.uniform(0.9, 1.1, shape)
        elif name.endswith((".bias", ".b1", ".b2", ".bq", ".bv", ".bo")):
            p.value[...] = rng.uniform(-0.1, 0.1, shape)
        elif name == "tri.w":
            p.value[...] = rng.uniform(-0.1, 0.1, shape)
        else:
            p.value[...] = rng.uniform(-0.3, 0.3, shape)


def run_gradcheck(config: GradCheckConfig | None = None) -> float:
    """Max relative error of the full-loss gradients; deterministic."""
    config = config or GradCheckConfig()
    model, doc = build_check_model(config)
    inp = model.prompt(doc.tokens)
    target = build_target_tensor(doc.gold, model.schemas, inp.n_text)

    from .model import trainable_parameters

    params = trainable_parameters(model)
    randomize_for_check(params, seed=config.seed + 17)

    def loss():
        return masked_loss(model.score(inp), target)

    return grad_check(loss, params, h=config.step)
