"""Schema-prompted span-table information extraction.

One masked encoder pass over a label prompt plus the sentence produces a
rank-3 scoring tensor; thresholding its structural tables yields entities,
relations, events, and sentiment triplets in a single decoding pass.
"""

from .data import ExDocument, fixture_schema, make_fixture, read_jsonl, write_jsonl
from .estimator import SpanTableExtractor
from .metrics import MetricReport, evaluate_task
from .model import Model, ModelConfig
from .records import Event, ExtractionRecord, Span
from .schema import LabelSchema, SchemaSet, load_schema, save_schema
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Event",
    "ExDocument",
    "ExtractionRecord",
    "LabelSchema",
    "MetricReport",
    "Model",
    "ModelConfig",
    "SchemaSet",
    "Span",
    "SpanTableExtractor",
    "TrainConfig",
    "evaluate_task",
    "fixture_schema",
    "load_schema",
    "make_fixture",
    "read_jsonl",
    "save_schema",
    "train",
    "write_jsonl",
    "__version__",
]
