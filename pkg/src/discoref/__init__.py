"""Coreference resolution with discourse-tree distance features.

The public surface: document and tree data models, the synthetic
corpus generator, the embedding store, training and prediction, the
LEA metric, and an estimator-style wrapper.
"""

__version__ = "0.1.0"

from .corpus import (
    CorpusStats, Document, MentionSpan, Token, corpus_stats, load_corpus,
    load_document, save_document, split_tokens, validate_document,
)
from .discourse import (
    EduTable, RstNode, build_edu_table, edu_of_span, lca_distance,
    linear_distance, load_rst, merge_paragraph_trees, parse_trees,
    rhetorical_distance, save_rst,
)
from .encoder import (
    EmbeddingStore, EncoderParams, ParagraphEmbedding, average_subtokens,
    compress, load_store, save_store, span_repr, span_representations,
    synthetic_embeddings,
)
from .errors import (
    AlignmentError, CheckpointError, ConfigError, CorpusFormatError,
    DiscorefError, NumericError, StoreFormatError, TreeFormatError,
)
from .estimator import CoreferenceResolver
from .evalmetrics import LeaScore, lea, lea_oracle
from .scorer import (
    Prediction, ScorerParams, bucketize, coarse_prune, coarse_scores, decode,
    enumerate_spans, fine_score, fine_scores, mention_scores,
    mention_scores_and_prune, normalize_features, prune_mentions,
)
from .synth import SynthConfig, generate_synthetic_corpus
from .training import (
    AdamState, ModelParams, TrainConfig, TrainResult, gold_antecedent_mask,
    load_checkpoint, marginal_loss, optimizer_step, predict, run_pipeline,
    save_checkpoint, train,
)

__all__ = [
    "__version__",
    "AdamState", "AlignmentError", "CheckpointError", "ConfigError",
    "CoreferenceResolver", "CorpusFormatError", "CorpusStats", "DiscorefError",
    "Document", "EduTable", "EmbeddingStore", "EncoderParams", "LeaScore",
    "MentionSpan", "ModelParams", "NumericError", "ParagraphEmbedding",
    "Prediction", "RstNode", "ScorerParams", "StoreFormatError", "SynthConfig",
    "Token", "TrainConfig", "TrainResult", "TreeFormatError",
    "average_subtokens", "bucketize", "build_edu_table", "coarse_prune",
    "coarse_scores", "compress", "corpus_stats", "decode", "edu_of_span",
    "enumerate_spans", "fine_score", "fine_scores", "generate_synthetic_corpus",
    "gold_antecedent_mask", "lca_distance", "lea", "lea_oracle",
    "linear_distance", "load_checkpoint", "load_corpus", "load_document",
    "load_rst", "load_store", "marginal_loss", "mention_scores",
    "mention_scores_and_prune", "merge_paragraph_trees", "normalize_features",
    "optimizer_step", "parse_trees", "predict", "prune_mentions", "rhetorical_distance",
    "run_pipeline", "save_checkpoint", "save_document", "save_rst",
    "save_store", "span_repr", "span_representations", "split_tokens",
    "synthetic_embeddings", "train", "validate_document",
]
