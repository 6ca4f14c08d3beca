"""Model assembly, loss, optimization, training loop, checkpoints.

Training iterates documents one at a time: forward pass through the
full pipeline, marginal log-likelihood over gold antecedents, backward
pass, global-norm clipping, Adam. After each epoch both splits are
decoded and scored; the checkpoint keeps the weights of the epoch with
the best held-out score.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import Document, MentionSpan
from .discourse import (
    EduTable, RstNode, build_edu_table, lca_distance, linear_distance,
    merge_paragraph_trees, rhetorical_distance,
)
from .encoder import EncoderParams, EmbeddingStore, average_subtokens, compress, span_representations
from .errors import CheckpointError, ConfigError, NumericError
from .evalmetrics import lea
from .scorer import (
    PairScores, Prediction, ScorerParams, bucketize, coarse_prune, coarse_scores,
    decode, enumerate_spans, final_pair_scores, mention_scores_and_prune,
    normalize_features, token_distances,
)

CHECKPOINT_MAGIC = b"CHDM"
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ModelParams:
    """Encoder plus scorer weights with a stable tensor naming."""

    encoder: EncoderParams
    scorer: ScorerParams

    @classmethod
    def create(cls, d_lm: int, d_c: int, d_f: int, hidden: int, features,
               rng: np.random.Generator) -> "ModelParams":
        features = normalize_features(features)
        enc = EncoderParams.create(d_lm, d_c, rng)
        sc = ScorerParams.create(3 * d_c, d_f, hidden, features, rng)
        return cls(encoder=enc, scorer=sc)

    def tensors(self) -> dict[str, Tensor]:
        out = dict(self.encoder.tensors())
        out.update(self.scorer.tensors())
        return out


@dataclass
class TrainConfig:
    """Training and pipeline knobs; validated before use."""

    features: tuple[str, ...] = ()
    max_span_length: int = 13
    span_ratio: float = 0.4
    max_antecedents: int = 50
    compress_dim: int = 100
    feature_dim: int = 20
    hidden_dim: int = 150
    learning_rate: float = 1e-3
    epochs: int = 20
    dropout: float = 0.3
    clip_norm: float = 5.0
    validation_fraction: float = 0.05
    seed: int = 0
    debug_grad_checks: bool = False

    def validate(self) -> None:
        if self.max_span_length < 1:
            raise ConfigError("max_span_length must be positive")
        if not 0.0 < self.span_ratio:
            raise ConfigError("span_ratio must be positive")
        if self.max_antecedents < 1:
            raise ConfigError("max_antecedents must be positive")
        if self.compress_dim < 2 or self.compress_dim % 2:
            raise ConfigError("compress_dim must be a positive even number")
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("feature_dim and hidden_dim must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be non-negative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie strictly between 0 and 1")
        normalize_features(self.features)


def feature_buckets(
    table: EduTable | None,
    kept: list[MentionSpan],
    mention_idx: np.ndarray,
    antecedent_idx: np.ndarray,
    features: tuple[str, ...],
) -> dict[str, np.ndarray]:
    """Bucketized distances for each pair: token distance always, tree
    distances for the enabled features."""
    buckets = {"tok": bucketize(token_distances(kept, mention_idx, antecedent_idx))}
    if not features:
        return buckets
    if table is None:
        raise ConfigError("tree distance features are enabled but no discourse table was given")
    raw = {name: np.zeros(len(mention_idx), dtype=np.int64) for name in features}
    fns = {"lin": linear_distance, "rh": rhetorical_distance, "lca": lca_distance}
    for p, (i, j) in enumerate(zip(mention_idx, antecedent_idx)):
        anaphor, antecedent = kept[i], kept[j]
        for name in features:
            raw[name][p] = fns[name](table, antecedent, anaphor)
    for name in features:
        buckets[name] = bucketize(raw[name])
    return buckets


def run_pipeline(
    model: ModelParams,
    doc: Document,
    token_matrix: np.ndarray,
    table: EduTable | None,
    *,
    max_span_length: int,
    span_ratio: float,
    max_antecedents: int,
    dropout: float = 0.0,
    dropout_rng: np.random.Generator | None = None,
) -> PairScores:
    """Forward pass: spans, representations, both pruning stages, final scores."""
    spans = enumerate_spans(doc, max_span_length)
    if not spans:
        return PairScores([], [], np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp),
                          np.zeros(1, dtype=np.intp), ag.constant(np.zeros(0)))
    compressed = compress(model.encoder, token_matrix, doc.paragraph_bounds)
    starts = np.array([s.start for s in spans], dtype=np.intp)
    ends = np.array([s.end for s in spans], dtype=np.intp)
    reprs = span_representations(model.encoder, compressed, starts, ends)
    scores, kept_idx = mention_scores_and_prune(model.scorer, reprs, doc.n_tokens, span_ratio)
    kept = [spans[i] for i in kept_idx]
    kept_reprs = ag.rows(reprs, kept_idx)
    kept_scores = ag.gather(scores, kept_idx)
    coarse = coarse_scores(model.scorer, kept_reprs, kept_scores)
    candidates = coarse_prune(coarse.value, max_antecedents)

    counts = [len(c) for c in candidates]
    mention_idx = np.repeat(np.arange(len(kept)), counts)
    antecedent_idx = (np.concatenate(candidates) if kept else np.zeros(0)).astype(np.intp)
    buckets = feature_buckets(table, kept, mention_idx, antecedent_idx, model.scorer.features)

    mask = None
    if dropout > 0.0:
        if dropout_rng is None:
            raise ConfigError("dropout requires a random generator")
        in_dim = model.scorer.fine_w1.shape[0]
        mask = (dropout_rng.random((len(mention_idx), in_dim)) >= dropout) / (1.0 - dropout)
    return final_pair_scores(model.scorer, kept_reprs, kept, candidates, coarse, buckets, mask)


def gold_antecedent_mask(pairs: PairScores, clusters: list[frozenset[MentionSpan]]) -> np.ndarray:
    """True where a candidate antecedent shares a gold cluster with its mention."""
    cluster_of: dict[MentionSpan, int] = {}
    for c, cluster in enumerate(clusters):
        for m in cluster:
            cluster_of[m] = c
    mention_cluster = np.array([cluster_of.get(s, -1) for s in pairs.kept], dtype=np.int64)
    if len(pairs.mention_idx) == 0:
        return np.zeros(0, dtype=bool)
    mc = mention_cluster[pairs.mention_idx]
    ac = mention_cluster[pairs.antecedent_idx]
    return (mc >= 0) & (mc == ac)


def marginal_loss(pairs: PairScores, gold_mask: np.ndarray) -> Tensor:
    """Negative marginal log-likelihood, summed over mentions.

    Each mention's probability mass runs over its candidates plus the
    fixed-zero no-antecedent score; when no candidate is gold, the
    no-antecedent option is the gold. One tape node; the backward rule
    is softmax minus the gold-normalized softmax.
    """
    scores = pairs.scores
    offsets = pairs.pair_offsets
    values = scores.value
    gold_mask = np.asarray(gold_mask, dtype=bool)
    if gold_mask.shape != values.shape:
        raise ValueError("gold mask does not align with pair scores")

    total = 0.0
    prob = np.zeros_like(values)
    gold_prob = np.zeros_like(values)
    for i in range(len(pairs.kept)):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        row = values[lo:hi]
        shift = max(0.0, row.max()) if hi > lo else 0.0
        exps = np.exp(row - shift)
        z = np.exp(-shift) + exps.sum()
        log_z = shift + np.log(z)
        row_gold = gold_mask[lo:hi]
        if row_gold.any():
            gold_exps = exps[row_gold]
            log_gold = shift + np.log(gold_exps.sum())
            gold_prob[lo:hi][row_gold] = gold_exps / gold_exps.sum()
        else:
            log_gold = 0.0
        total += log_z - log_gold
        prob[lo:hi] = exps / z

    def vjp(g):
        return (g * (prob - gold_prob),)

    return ag.custom(np.asarray(total), (scores,), vjp)


@dataclass
class AdamState:
    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    tensors: dict[str, Tensor],
    state: AdamState,
    learning_rate: float,
    clip_norm: float = 0.0,
) -> float:
    """One Adam update from the accumulated gradients; returns the
    pre-clip global gradient norm. Missing gradients count as zero;
    non-finite gradients abort."""
    grads = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name}")
        grads[name] = g
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if clip_norm > 0.0 and norm > clip_norm:
        scale = clip_norm / norm
        grads = {name: g * scale for name, g in grads.items()}
    state.step += 1
    t = state.step
    for name, tensor in tensors.items():
        g = grads[name]
        m = state.first.get(name)
        v = state.second.get(name)
        m = (1 - ADAM_BETA1) * g if m is None else ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = (1 - ADAM_BETA2) * g * g if v is None else ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        state.first[name] = m
        state.second[name] = v
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        tensor.value = tensor.value - learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return norm


@dataclass
class DocBundle:
    """Everything the pipeline needs for one document, precomputed."""

    doc: Document
    token_matrix: np.ndarray
    table: EduTable | None


def prepare_bundles(
    docs: list[Document],
    store: EmbeddingStore,
    trees: dict[str, list[RstNode]] | None,
    features: tuple[str, ...],
) -> list[DocBundle]:
    missing = [d.id for d in docs if d.id not in store]
    if missing:
        raise ConfigError(f"store lacks embeddings for documents: {missing[:10]}")
    bundles = []
    for doc in docs:
        table = None
        if features:
            if not trees or doc.id not in trees:
                raise ConfigError(f"tree distance features need discourse trees; missing for {doc.id!r}")
            table = build_edu_table(merge_paragraph_trees(trees[doc.id]), doc)
        bundles.append(DocBundle(doc, average_subtokens(store, doc), table))
    return bundles


def _decode_bundle(model: ModelParams, bundle: DocBundle, cfg: TrainConfig) -> Prediction:
    pairs = run_pipeline(
        model, bundle.doc, bundle.token_matrix, bundle.table,
        max_span_length=cfg.max_span_length, span_ratio=cfg.span_ratio,
        max_antecedents=cfg.max_antecedents,
    )
    return decode(bundle.doc.id, pairs)


def _split_f1(model: ModelParams, bundles: list[DocBundle], cfg: TrainConfig) -> float:
    key = {}
    response = {}
    for b in bundles:
        key[b.doc.id] = [set((m.start, m.end) for m in c) for c in b.doc.clusters]
        pred = _decode_bundle(model, b, cfg)
        response[b.doc.id] = [set((m.start, m.end) for m in c) for c in pred.clusters]
    return lea(key, response).f1


@dataclass
class TrainResult:
    model: ModelParams
    config: TrainConfig
    d_lm: int
    log: list[dict]
    best_epoch: int
    best_val_f1: float


def train(
    docs: list[Document],
    store: EmbeddingStore,
    trees: dict[str, list[RstNode]] | None,
    cfg: TrainConfig,
) -> TrainResult:
    """Train from scratch; returns the best-epoch weights and the epoch log."""
    cfg.validate()
    features = normalize_features(cfg.features)
    if len(docs) < 2:
        raise ConfigError("training needs at least two documents to hold out validation")
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate document ids in the training corpus")
    bundles = prepare_bundles(docs, store, trees, features)

    seed_root = np.random.SeedSequence(cfg.seed)
    init_seed, split_seed, shuffle_seed, dropout_seed = seed_root.spawn(4)
    model = ModelParams.create(store.d_lm, cfg.compress_dim, cfg.feature_dim,
                               cfg.hidden_dim, features, np.random.default_rng(init_seed))
    tensors = model.tensors()

    n_val = int(round(cfg.validation_fraction * len(docs)))
    n_val = min(max(n_val, 1), len(docs) - 1)
    perm = np.random.default_rng(split_seed).permutation(len(docs))
    val_bundles = [bundles[i] for i in sorted(perm[:n_val])]
    train_bundles = [bundles[i] for i in sorted(perm[n_val:])]

    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)
    state = AdamState()
    log: list[dict] = []
    best_val = -1.0
    best_epoch = -1
    best_values: dict[str, np.ndarray] = {}

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_bundles))
        losses = []
        for b_idx in order:
            bundle = train_bundles[b_idx]
            pairs = run_pipeline(
                model, bundle.doc, bundle.token_matrix, bundle.table,
                max_span_length=cfg.max_span_length, span_ratio=cfg.span_ratio,
                max_antecedents=cfg.max_antecedents,
                dropout=cfg.dropout, dropout_rng=dropout_rng,
            )
            loss = marginal_loss(pairs, gold_antecedent_mask(pairs, bundle.doc.clusters))
            if not np.isfinite(loss.value):
                raise NumericError(f"non-finite loss on document {bundle.doc.id!r}")
            ag.zero_grads(tensors.values())
            ag.backward(loss)
            if cfg.debug_grad_checks:
                for name, tensor in tensors.items():
                    if tensor.grad is not None and not np.isfinite(tensor.grad).all():
                        raise NumericError(f"non-finite gradient in {name} on {bundle.doc.id!r}")
            optimizer_step(tensors, state, cfg.learning_rate, cfg.clip_norm)
            losses.append(float(loss.value))
        train_f1 = _split_f1(model, train_bundles, cfg)
        val_f1 = _split_f1(model, val_bundles, cfg)
        log.append({
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)) if losses else 0.0,
            "train_f1": train_f1,
            "val_f1": val_f1,
        })
        if val_f1 > best_val:
            best_val = val_f1
            best_epoch = epoch
            best_values = {name: t.value.copy() for name, t in tensors.items()}

    for name, tensor in tensors.items():
        tensor.value = best_values[name]
    return TrainResult(model=model, config=cfg, d_lm=store.d_lm, log=log,
                       best_epoch=best_epoch, best_val_f1=best_val)


def predict(
    model: ModelParams,
    docs: list[Document],
    store: EmbeddingStore,
    trees: dict[str, list[RstNode]] | None,
    cfg: TrainConfig,
) -> list[Prediction]:
    bundles = prepare_bundles(docs, store, trees, model.scorer.features)
    return [_decode_bundle(model, b, cfg) for b in bundles]


def _checkpoint_config(result: TrainResult) -> dict:
    cfg = result.config
    return {
        "version": CHECKPOINT_VERSION,
        "d_lm": result.d_lm,
        "compress_dim": cfg.compress_dim,
        "feature_dim": cfg.feature_dim,
        "hidden_dim": cfg.hidden_dim,
        "features": list(normalize_features(cfg.features)),
        "max_span_length": cfg.max_span_length,
        "span_ratio": cfg.span_ratio,
        "max_antecedents": cfg.max_antecedents,
        "best_epoch": result.best_epoch,
        "best_val_f1": result.best_val_f1,
    }


def save_checkpoint(result: TrainResult, path: str | Path) -> None:
    """Write weights plus the pipeline configuration needed to decode."""
    config = _checkpoint_config(result)
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    tensors = result.model.tensors()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            # ascontiguousarray would promote 0-d values to 1-d
            data = np.asarray(tensors[name].value, dtype="<f8", order="C")
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: expected {n} bytes for {what}")
    return buf


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Read a checkpoint; returns the model and its pipeline configuration."""
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4, "config length"))
        try:
            config = json.loads(_read_exact(f, blob_len, "config").decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt config block: {exc}") from exc
        (n_tensors,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, "shape"))
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(_read_exact(f, 8 * count, f"data of {name}"), dtype="<f8")
            arrays[name] = data.reshape(shape).copy()
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last tensor")

    for key in ("d_lm", "compress_dim", "feature_dim", "hidden_dim", "features"):
        if key not in config:
            raise CheckpointError(f"{path}: config lacks {key!r}")
    model = ModelParams.create(
        config["d_lm"], config["compress_dim"], config["feature_dim"],
        config["hidden_dim"], tuple(config["features"]), np.random.default_rng(0),
    )
    tensors = model.tensors()
    if set(tensors) != set(arrays):
        missing = sorted(set(tensors) - set(arrays))
        extra = sorted(set(arrays) - set(tensors))
        raise CheckpointError(f"{path}: tensor names disagree (missing {missing}, unexpected {extra})")
    for name, tensor in tensors.items():
        if tensor.value.shape != arrays[name].shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {arrays[name].shape}, expected {tensor.value.shape}")
        tensor.value = arrays[name]
    return model, config


def decode_config(config: dict) -> TrainConfig:
    """TrainConfig carrying a checkpoint's decode-time pipeline knobs."""
    return TrainConfig(
        features=tuple(config["features"]),
        max_span_length=config["max_span_length"],
        span_ratio=config["span_ratio"],
        max_antecedents=config["max_antecedents"],
        compress_dim=config["compress_dim"],
        feature_dim=config["feature_dim"],
        hidden_dim=config["hidden_dim"],
    )
