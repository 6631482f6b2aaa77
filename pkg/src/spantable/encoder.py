"""Mask- and position-aware bidirectional transformer encoder.

Pre-norm residual blocks over learned token + position embeddings; the
attention logits receive an additive -1e9 bias wherever the unified input's
permission matrix forbids a key, so forbidden positions get exactly zero
weight.  The encoder returns one row per schema (read at its identifier
token) and one row per text token.

Parameter count for ``layers=L, hidden=d, heads wired into d, ffn_hidden=f,
vocab=V, max_position=P``:

    V*d + P*d + L * (4*d*d + 3*d + 4*d + d*f + f + f*d + d) + 2*d

(attention q/k/v/out plus q/v/out biases, two layer norms per block, the two
FFN affine maps, and a final layer norm).  The key projection carries no
bias: a constant added to every key shifts each attention row uniformly and
cancels in the softmax, so the parameter would be exactly gradient-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .schema import UnifiedInput


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden_size: int = 64
    heads: int = 4
    ffn_hidden: int = 256
    vocab_size: int = 0
    max_position: int = 640
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by heads {self.heads}"
            )
        if min(self.layers, self.hidden_size, self.heads, self.ffn_hidden) < 1:
            raise ValueError("encoder dimensions must be positive")


@dataclass
class Encodings:
    """Schema rows (one per identifier token) and text rows."""

    h_s: Tensor
    h_x: Tensor


def parameter_count(config: EncoderConfig) -> int:
    d, f = config.hidden_size, config.ffn_hidden
    per_layer = 4 * d * d + 3 * d + 4 * d + d * f + f + f * d + d
    return (config.vocab_size + config.max_position) * d + config.layers * per_layer + 2 * d


def init_encoder_params(config: EncoderConfig) -> dict[str, Tensor]:
    """Seeded init: weights ~ N(0, 0.02), norms at identity, biases zero."""
    rng = np.random.default_rng(config.seed)
    d, f = config.hidden_size, config.ffn_hidden

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    params: dict[str, Tensor] = {
        "tok_emb": normal(config.vocab_size, d),
        "pos_emb": normal(config.max_position, d),
        "ln_f.gain": ones(d),
        "ln_f.bias": zeros(d),
    }
    for i in range(config.layers):
        prefix = f"layers.{i}"
        params[f"{prefix}.ln1.gain"] = ones(d)
        params[f"{prefix}.ln1.bias"] = zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{prefix}.attn.{name}"] = normal(d, d)
        for name in ("bq", "bv", "bo"):
            params[f"{prefix}.attn.{name}"] = zeros(d)
        params[f"{prefix}.ln2.gain"] = ones(d)
        params[f"{prefix}.ln2.bias"] = zeros(d)
        params[f"{prefix}.ffn.w1"] = normal(d, f)
        params[f"{prefix}.ffn.b1"] = zeros(f)
        params[f"{prefix}.ffn.w2"] = normal(f, d)
        params[f"{prefix}.ffn.b2"] = zeros(d)
    return params


def _heads(x: Tensor, n: int, heads: int, head_dim: int) -> Tensor:
    return ad.transpose(ad.reshape(x, (n, heads, head_dim)), (1, 0, 2))


def _check_finite(x: Tensor, layer: int, stage: str) -> None:
    if not np.isfinite(x.value).all():
        raise FloatingPointError(f"layer {layer} {stage} produced non-finite values")


def encode(inp: UnifiedInput, params: dict[str, Tensor], config: EncoderConfig) -> Encodings:
    n = len(inp)
    if int(inp.token_ids.max()) >= config.vocab_size or int(inp.token_ids.min()) < 0:
        raise ValueError(
            f"token id out of range for vocab_size={config.vocab_size}"
        )
    if int(inp.positions.max()) >= config.max_position:
        raise ValueError(
            f"position id {int(inp.positions.max())} out of range for "
            f"max_position={config.max_position}"
        )
    heads, d = config.heads, config.hidden_size
    head_dim = d // heads
    attn_bias = ((1.0 - inp.mask.astype(np.float64)) * ad.MASK_BIAS)[None, :, :]

    x = ad.add(
        ad.gather_rows(params["tok_emb"], inp.token_ids),
        ad.gather_rows(params["pos_emb"], inp.positions),
    )
    for i in range(config.layers):
        prefix = f"layers.{i}"
        h = ad.layer_norm(x, params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"])
        q = _heads(ad.add(ad.matmul(h, params[f"{prefix}.attn.wq"]), params[f"{prefix}.attn.bq"]), n, heads, head_dim)
        k = _heads(ad.matmul(h, params[f"{prefix}.attn.wk"]), n, heads, head_dim)
        v = _heads(ad.add(ad.matmul(h, params[f"{prefix}.attn.wv"]), params[f"{prefix}.attn.bv"]), n, heads, head_dim)
        scores = ad.scale(ad.einsum("hnd,hmd->hnm", q, k), 1.0 / np.sqrt(head_dim))
        weights = ad.softmax(scores, axis=-1, additive_mask=attn_bias)
        mixed = ad.einsum("hnm,hmd->hnd", weights, v)
        mixed = ad.reshape(ad.transpose(mixed, (1, 0, 2)), (n, d))
        attn_out = ad.add(ad.matmul(mixed, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])
        x = ad.add(x, attn_out)
        _check_finite(x, i, "attention")

        h = ad.layer_norm(x, params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"])
        h = ad.gelu(ad.add(ad.matmul(h, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"]))
        h = ad.add(ad.matmul(h, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"])
        x = ad.add(x, h)
        _check_finite(x, i, "ffn")

    x = ad.layer_norm(x, params["ln_f.gain"], params["ln_f.bias"])
    return Encodings(
        h_s=ad.gather_rows(x, inp.schema_anchors),
        h_x=ad.gather_rows(x, inp.text_range),
    )
