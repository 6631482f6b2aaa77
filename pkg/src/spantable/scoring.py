"""Span scoring heads: one structural table of scores per schema.

The triaffine head mixes each schema row with start/end text representations
through a d*d*d weight tensor, staged so the schema axis is folded first:

    start = FFN_s(H_x),  end = FFN_e(H_x)
    logits[r, p, q] = sum_{a,b,c} W[a,b,c] * H_s[r,a] * start[p,b] * end[q,c]
    scores = sigmoid(logits)

``triaffine_score_naive`` recomputes the same thing with explicit Python
loops and is the oracle for the staged contraction.  The multi-head
selection head is the rank-restricted additive alternative used by the
``--no-triaffine`` ablation: it scores (schema, start) and (schema, end)
separately and adds the two maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import Encodings


@dataclass
class ScoreTensor:
    """Sigmoid scores, one (N_x, N_x) structural table per schema."""

    values: np.ndarray
    schema_order: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise ValueError(f"score tensor must be (N_s, N_x, N_x), got {self.values.shape}")
        if len(self.schema_order) != self.values.shape[0]:
            raise ValueError(
                f"{len(self.schema_order)} schema names for {self.values.shape[0]} tables"
            )

    @property
    def n_text(self) -> int:
        return self.values.shape[1]

    def table(self, name: str) -> np.ndarray:
        return self.values[self.schema_order.index(name)]


def init_scoring_params(hidden_size: int, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    d = hidden_size

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    params = {"tri.w": normal(d, d, d), "mh.u": normal(d, d), "mh.v": normal(d, d)}
    for side in ("s", "e"):
        params[f"ffn_{side}.w1"] = normal(d, d)
        params[f"ffn_{side}.b1"] = zeros(d)
        params[f"ffn_{side}.w2"] = normal(d, d)
        params[f"ffn_{side}.b2"] = zeros(d)
    return params


def _position_ffn(h_x: Tensor, params: dict[str, Tensor], side: str) -> Tensor:
    hidden = ad.gelu(ad.add(ad.matmul(h_x, params[f"ffn_{side}.w1"]), params[f"ffn_{side}.b1"]))
    return ad.add(ad.matmul(hidden, params[f"ffn_{side}.w2"]), params[f"ffn_{side}.b2"])


def trilinear_logits(h_s, start, end, w) -> Tensor:
    """Staged contraction, schema axis first: O(N_s*d^3 + N_s*N_x*d^2 + N_s*N_x^2*d)."""
    folded = ad.einsum("ra,abc->rbc", h_s, w)
    partial = ad.einsum("pb,rbc->rpc", start, folded)
    return ad.einsum("rpc,qc->rpq", partial, end)


def triaffine_logits(enc: Encodings, params: dict[str, Tensor]) -> Tensor:
    start = _position_ffn(enc.h_x, params, "s")
    end = _position_ffn(enc.h_x, params, "e")
    return trilinear_logits(enc.h_s, start, end, params["tri.w"])


def triaffine_score(enc: Encodings, params: dict[str, Tensor]) -> Tensor:
    return ad.sigmoid(triaffine_logits(enc, params))


def multihead_logits(h_s, start, end, u, v) -> Tensor:
    """Additive interaction: <U h_s[r], start[p]> + <V h_s[r], end[q]>."""
    left = ad.einsum("rb,pb->rp", ad.matmul(h_s, u), start)
    right = ad.einsum("rc,qc->rq", ad.matmul(h_s, v), end)
    n_s, n_x = left.shape
    return ad.add(
        ad.reshape(left, (n_s, n_x, 1)),
        ad.reshape(right, (n_s, 1, n_x)),
    )


def multihead_selection_score(enc: Encodings, params: dict[str, Tensor]) -> Tensor:
    start = _position_ffn(enc.h_x, params, "s")
    end = _position_ffn(enc.h_x, params, "e")
    return ad.sigmoid(multihead_logits(enc.h_s, start, end, params["mh.u"], params["mh.v"]))


def _ffn_naive(h_x: np.ndarray, params: dict[str, Tensor], side: str) -> np.ndarray:
    pre = h_x @ params[f"ffn_{side}.w1"].value + params[f"ffn_{side}.b1"].value
    inner = math.sqrt(2.0 / math.pi) * (pre + 0.044715 * pre**3)
    hidden = 0.5 * pre * (1.0 + np.tanh(inner))
    return hidden @ params[f"ffn_{side}.w2"].value + params[f"ffn_{side}.b2"].value


def triaffine_score_naive(enc: Encodings, params: dict[str, Tensor]) -> np.ndarray:
    """Reference head: the trilinear form evaluated cell by cell with plain
    Python loops.  O(N_s * N_x^2 * d^3); used only as an oracle."""
    h_s = np.asarray(enc.h_s.value if isinstance(enc.h_s, Tensor) else enc.h_s)
    h_x = np.asarray(enc.h_x.value if isinstance(enc.h_x, Tensor) else enc.h_x)
    if h_s.shape[1] != h_x.shape[1]:
        raise ad.ShapeError(f"hidden size mismatch: {h_s.shape} vs {h_x.shape}")
    start = _ffn_naive(h_x, params, "s").tolist()
    end = _ffn_naive(h_x, params, "e").tolist()
    w = params["tri.w"].value
    if w.shape != (h_s.shape[1],) * 3:
        raise ad.ShapeError(f"weight tensor {w.shape} does not match hidden {h_s.shape}")
    w = w.tolist()
    schemas = h_s.tolist()
    n_s, n_x, d = len(schemas), len(start), h_s.shape[1]
    scores = np.empty((n_s, n_x, n_x))
    for r in range(n_s):
        row = schemas[r]
        for p in range(n_x):
            for q in range(n_x):
                sp, eq = start[p], end[q]
                total = 0.0
                for a in range(d):
                    wa, ra = w[a], row[a]
                    for b in range(d):
                        wab = wa[b]
                        rb = ra * sp[b]
                        for c in range(d):
                            total += wab[c] * rb * eq[c]
                scores[r, p, q] = 1.0 / (1.0 + math.exp(-total))
    return scores
