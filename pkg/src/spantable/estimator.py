"""Scikit-learn style front door for the whole pipeline.

``SpanTableExtractor`` is a regular estimator: constructor arguments are
hyper-parameters (``get_params``/``set_params``/``clone`` work as usual),
``fit`` consumes a list of :class:`~spantable.data.ExDocument` whose gold
records are the supervision, ``predict`` returns one
:class:`~spantable.records.ExtractionRecord` per document, and ``score``
reports the task's primary micro-F1.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .data import ExDocument, task_kind, vocab_for
from .metrics import MetricReport, evaluate_task, primary_metric
from .model import Model, ModelConfig
from .records import ExtractionRecord
from .schema import SchemaSet, load_schema
from .training import TrainConfig, train


def check_documents(X, schemas: SchemaSet | None = None) -> list[ExDocument]:
    """Validate estimator input: a non-empty sequence of ExDocuments with
    in-bounds gold spans (and labels drawn from ``schemas`` when given)."""
    docs = list(X)
    if not docs:
        raise ValueError("expected a non-empty sequence of documents")
    for i, doc in enumerate(docs):
        if not isinstance(doc, ExDocument):
            raise TypeError(f"document {i} is {type(doc).__name__}, expected ExDocument")
        try:
            doc.check()
        except ValueError as exc:
            raise ValueError(f"document {i}: {exc}") from exc
        if schemas is not None:
            known = {l.name for l in schemas.labels()}
            for _span, label in doc.gold.entities:
                if label not in known:
                    raise ValueError(f"document {i}: unknown label {label!r}")
    return docs


class SpanTableExtractor(BaseEstimator):
    """Joint span detection / classification / association extractor.

    Parameters mirror the underlying model and training configuration; the
    ``use_*`` flags expose the ablation switches (schema attention mask,
    triaffine head, label names in the prompt).
    """

    def __init__(
        self,
        schema=None,
        *,
        layers: int = 2,
        hidden_size: int = 64,
        heads: int = 4,
        ffn_hidden: int = 256,
        max_length: int = 512,
        text_offset: int = 64,
        max_position: int = 640,
        learning_rate: float = 1e-3,
        batch_size: int = 8,
        epochs: int = 200,
        warmup_rate: float = 0.06,
        schedule: bool = True,
        threshold: float = 0.5,
        use_sam: bool = True,
        use_triaffine: bool = True,
        use_label_names: bool = True,
        text_sees_labels: bool = False,
        stop_at_f1: float | None = None,
        seed: int = 0,
    ):
        self.schema = schema
        self.layers = layers
        self.hidden_size = hidden_size
        self.heads = heads
        self.ffn_hidden = ffn_hidden
        self.max_length = max_length
        self.text_offset = text_offset
        self.max_position = max_position
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.warmup_rate = warmup_rate
        self.schedule = schedule
        self.threshold = threshold
        self.use_sam = use_sam
        self.use_triaffine = use_triaffine
        self.use_label_names = use_label_names
        self.text_sees_labels = text_sees_labels
        self.stop_at_f1 = stop_at_f1
        self.seed = seed

    # -- configuration plumbing ------------------------------------------

    def _resolve_schema(self) -> SchemaSet:
        if isinstance(self.schema, SchemaSet):
            return self.schema
        if isinstance(self.schema, (str, bytes)) or hasattr(self.schema, "__fspath__"):
            return load_schema(self.schema)
        if isinstance(self.schema, dict):
            return SchemaSet.from_dict(self.schema)
        raise ValueError("schema must be a SchemaSet, a mapping, or a path to a schema file")

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            layers=self.layers,
            hidden_size=self.hidden_size,
            heads=self.heads,
            ffn_hidden=self.ffn_hidden,
            max_length=self.max_length,
            text_offset=self.text_offset,
            max_position=self.max_position,
            seed=self.seed,
            use_sam=self.use_sam,
            use_triaffine=self.use_triaffine,
            use_label_names=self.use_label_names,
            text_sees_labels=self.text_sees_labels,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            warmup_rate=self.warmup_rate,
            schedule=self.schedule,
            seed=self.seed,
            threshold=self.threshold,
            stop_at_f1=self.stop_at_f1,
        )

    # -- estimator API -----------------------------------------------------

    def fit(self, X, y=None, trace_path=None):
        schemas = self._resolve_schema()
        docs = check_documents(X, schemas)
        self.schemas_ = schemas
        self.vocab_ = vocab_for(docs, schemas)
        self.model_ = Model(config=self._model_config(), schemas=schemas, vocab=self.vocab_)
        self.train_result_ = train(self.model_, docs, self._train_config(), trace_path)
        self.trace_ = self.train_result_.trace
        return self

    def _fitted_model(self) -> Model:
        if not hasattr(self, "model_"):
            raise RuntimeError("this SpanTableExtractor is not fitted yet; call fit first")
        return self.model_

    def predict(self, X) -> list[ExtractionRecord]:
        model = self._fitted_model()
        docs = check_documents(X)
        return [model.predict(doc.tokens, self.threshold) for doc in docs]

    def score(self, X, y=None) -> float:
        """Primary micro-F1 of the fitted task on ``X`` (gold from the docs)."""
        model = self._fitted_model()
        docs = check_documents(X)
        kind = task_kind(model.schemas)
        reports = self.evaluate(docs)
        return reports[primary_metric(kind)].f1

    def evaluate(self, X) -> dict[str, MetricReport]:
        model = self._fitted_model()
        docs = check_documents(X)
        preds = self.predict(docs)
        kind = task_kind(model.schemas)
        return evaluate_task(kind, preds, [d.gold for d in docs], [d.tokens for d in docs])

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        self._fitted_model().save(path)

    @classmethod
    def from_model(cls, model: Model, threshold: float = 0.5) -> "SpanTableExtractor":
        config = model.config
        est = cls(
            schema=model.schemas,
            layers=config.layers,
            hidden_size=config.hidden_size,
            heads=config.heads,
            ffn_hidden=config.ffn_hidden,
            max_length=config.max_length,
            text_offset=config.text_offset,
            max_position=config.max_position,
            threshold=threshold,
            use_sam=config.use_sam,
            use_triaffine=config.use_triaffine,
            use_label_names=config.use_label_names,
            text_sees_labels=config.text_sees_labels,
            seed=config.seed,
        )
        est.schemas_ = model.schemas
        est.vocab_ = model.vocab
        est.model_ = model
        return est

    @classmethod
    def load(cls, path, threshold: float = 0.5) -> "SpanTableExtractor":
        return cls.from_model(Model.load(path), threshold=threshold)
