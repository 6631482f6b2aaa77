"""Inference throughput measurement.

One sentence is decoded in a single pass: encode the prompt, score every
structural table, read the structures out of the tensor.  The benchmark
times the three phases separately, excludes warmup iterations, and groups
per-sentence timings by the number of gold targets so that the
target-count-independence of single-pass decoding is observable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from statistics import mean

from .data import ExDocument
from .encoder import encode
from .model import Model
from .records import ExtractionRecord
from .scoring import ScoreTensor, multihead_selection_score, triaffine_score
from .tables import decode_record


def count_targets(record: ExtractionRecord) -> int:
    return (
        len(record.entities)
        + len(record.relations)
        + len(record.sentiments)
        + sum(1 + len(e.arguments) for e in record.events)
    )


@dataclass
class SentenceTiming:
    n_tokens: int
    n_targets: int
    encode_s: float
    score_s: float
    decode_s: float

    @property
    def total_s(self) -> float:
        return self.encode_s + self.score_s + self.decode_s


@dataclass
class BenchReport:
    timings: list[SentenceTiming] = field(default_factory=list)
    warmup: int = 0
    repeats: int = 1

    @property
    def sentences_per_second(self) -> float:
        total = sum(t.total_s for t in self.timings)
        return len(self.timings) / total if total > 0 else float("inf")

    def mean_total_by_targets(self) -> dict[int, float]:
        groups: dict[int, list[float]] = {}
        for t in self.timings:
            groups.setdefault(t.n_targets, []).append(t.total_s)
        return {k: mean(v) for k, v in sorted(groups.items())}

    def mean_phase_seconds(self) -> dict[str, float]:
        return {
            "encode": mean(t.encode_s for t in self.timings),
            "score": mean(t.score_s for t in self.timings),
            "decode": mean(t.decode_s for t in self.timings),
        }

    def to_dict(self) -> dict:
        return {
            "sentences": len(self.timings),
            "warmup": self.warmup,
            "repeats": self.repeats,
            "sentences_per_second": self.sentences_per_second,
            "mean_phase_seconds": self.mean_phase_seconds(),
            "mean_total_seconds_by_target_count": {
                str(k): v for k, v in self.mean_total_by_targets().items()
            },
        }


def run_bench(
    model: Model,
    docs: list[ExDocument],
    threshold: float = 0.5,
    warmup: int = 2,
    repeats: int = 5,
) -> BenchReport:
    """Time encode/score/decode per sentence, averaging ``repeats`` runs
    after ``warmup`` excluded iterations."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    head = triaffine_score if model.config.use_triaffine else multihead_selection_score
    enc_cfg = model.config.encoder_config(len(model.vocab))
    order = model.schemas.schema_names()
    report = BenchReport(warmup=warmup, repeats=repeats)
    for doc in docs:
        inp = model.prompt(doc.tokens)
        for _ in range(warmup):
            node = head(encode(inp, model.params, enc_cfg), model.params)
            decode_record(ScoreTensor(node.value, order), model.schemas, threshold)
        enc_t = score_t = dec_t = 0.0
        for _ in range(repeats):
            t0 = time.perf_counter()
            enc = encode(inp, model.params, enc_cfg)
            t1 = time.perf_counter()
            node = head(enc, model.params)
            t2 = time.perf_counter()
            decode_record(ScoreTensor(node.value, order), model.schemas, threshold)
            t3 = time.perf_counter()
            enc_t += t1 - t0
            score_t += t2 - t1
            dec_t += t3 - t2
        report.timings.append(
            SentenceTiming(
                n_tokens=inp.n_text,
                n_targets=count_targets(doc.gold),
                encode_s=enc_t / repeats,
                score_s=score_t / repeats,
                decode_s=dec_t / repeats,
            )
        )
    return report
