"""Estimator-style wrapper around the functional training pipeline.

Follows the scikit-learn conventions: constructor stores
hyperparameters verbatim, ``fit`` learns state into trailing-underscore
attributes, ``get_params``/``set_params``/``clone`` work as usual.
Documents carry their own gold clusters, so ``y`` is accepted but
ignored; embeddings and trees travel as keyword arguments because they
are data, not hyperparameters.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .errors import ConfigError
from .evalmetrics import lea
from .scorer import normalize_features
from .training import TrainConfig, predict as _predict, train as _train
from .validation import check_documents, check_embeddings, check_trees


class CoreferenceResolver(BaseEstimator):
    """Span-ranking coreference resolver with optional tree distance features.

    Parameters mirror :class:`discoref.training.TrainConfig`;
    ``random_state`` plays the seed role. ``fit`` expects the documents
    as ``X`` plus an embedding store, and discourse trees whenever any
    of the ``features`` ("lin", "rh", "lca") are enabled.
    """

    def __init__(
        self,
        features: tuple[str, ...] = (),
        max_span_length: int = 13,
        span_ratio: float = 0.4,
        max_antecedents: int = 50,
        compress_dim: int = 100,
        feature_dim: int = 20,
        hidden_dim: int = 150,
        learning_rate: float = 1e-3,
        epochs: int = 20,
        dropout: float = 0.3,
        clip_norm: float = 5.0,
        validation_fraction: float = 0.05,
        random_state: int = 0,
    ):
        self.features = features
        self.max_span_length = max_span_length
        self.span_ratio = span_ratio
        self.max_antecedents = max_antecedents
        self.compress_dim = compress_dim
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.dropout = dropout
        self.clip_norm = clip_norm
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            features=normalize_features(self.features),
            max_span_length=self.max_span_length,
            span_ratio=self.span_ratio,
            max_antecedents=self.max_antecedents,
            compress_dim=self.compress_dim,
            feature_dim=self.feature_dim,
            hidden_dim=self.hidden_dim,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            dropout=self.dropout,
            clip_norm=self.clip_norm,
            validation_fraction=self.validation_fraction,
            seed=self.random_state,
        )

    def fit(self, X, y=None, *, embeddings, trees=None):
        cfg = self._config()
        docs = check_documents(X)
        store = check_embeddings(embeddings, docs)
        trees = check_trees(trees, docs, cfg.features)
        result = _train(docs, store, trees, cfg)
        self.model_ = result.model
        self.history_ = result.log
        self.best_epoch_ = result.best_epoch
        self.best_val_f1_ = result.best_val_f1
        self.d_lm_ = result.d_lm
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ConfigError("this resolver is not fitted yet; call fit first")

    def predict(self, X, *, embeddings, trees=None) -> list[list[list[tuple[int, int]]]]:
        """Clusters per document as lists of (start, end) token spans."""
        self._check_fitted()
        docs = check_documents(X)
        store = check_embeddings(embeddings, docs)
        trees = check_trees(trees, docs, self.model_.scorer.features)
        preds = _predict(self.model_, docs, store, trees, self._config())
        return [[[(m.start, m.end) for m in cluster] for cluster in p.clusters] for p in preds]

    def score(self, X, y=None, *, embeddings, trees=None) -> float:
        """LEA F1 of the predictions against the documents' own clusters."""
        docs = check_documents(X)
        predicted = self.predict(docs, embeddings=embeddings, trees=trees)
        key = {d.id: [set((m.start, m.end) for m in c) for c in d.clusters] for d in docs}
        response = {d.id: [set(c) for c in clusters] for d, clusters in zip(docs, predicted)}
        return lea(key, response).f1
