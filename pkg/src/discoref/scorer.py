"""Span scoring, pruning, pair scoring, and chain decoding.

The scoring stack works on representations produced by the encoder:
a unary mention score prunes candidate spans to a budget proportional
to document length, a bilinear coarse score keeps the best antecedent
candidates per mention, and a feed-forward scorer over pair features
produces the final pairwise scores. Decoding links each mention to its
best-scoring antecedent when that beats the fixed-zero no-antecedent
score, then reads clusters off the link graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import Document, MentionSpan
from .encoder import xavier_uniform
from .errors import ConfigError

FEATURE_NAMES = ("lin", "rh", "lca")

BUCKET_EDGES = np.array([1, 2, 3, 4, 5, 8, 16, 32, 64])
N_BUCKETS = 10


def normalize_features(features) -> tuple[str, ...]:
    """Canonicalize a feature selection to a subset of (lin, rh, lca)."""
    if features is None:
        return ()
    chosen = set(features)
    unknown = chosen - set(FEATURE_NAMES)
    if unknown:
        raise ConfigError(f"unknown distance features: {sorted(unknown)}")
    return tuple(name for name in FEATURE_NAMES if name in chosen)


def bucketize(distance) -> np.ndarray | int:
    """Map non-negative distances to the 10 bucket ids
    [0], [1], [2], [3], [4], [5-7], [8-15], [16-31], [32-63], [64+)."""
    d = np.asarray(distance)
    if (d < 0).any():
        raise ValueError("distances must be non-negative")
    out = np.searchsorted(BUCKET_EDGES, d, side="right")
    return int(out) if np.isscalar(distance) else out


@dataclass
class ScorerParams:
    """Weights of the mention, coarse, and fine scorers.

    Distance-feature embedding tables exist only for enabled features;
    the token-distance table is always present. The fine scorer input is
    [g_i; g_j; token-distance embedding; one embedding per enabled
    tree feature].
    """

    d_g: int
    d_f: int
    hidden: int
    features: tuple[str, ...]
    mention_w: Tensor
    mention_b: Tensor
    coarse_w: Tensor
    fine_w1: Tensor
    fine_b1: Tensor
    fine_w2: Tensor
    fine_b2: Tensor
    feat_tok: Tensor
    feat_tables: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def create(cls, d_g: int, d_f: int, hidden: int, features, rng: np.random.Generator) -> "ScorerParams":
        features = normalize_features(features)
        in_dim = 2 * d_g + d_f * (1 + len(features))
        params = cls(
            d_g=d_g,
            d_f=d_f,
            hidden=hidden,
            features=features,
            mention_w=ag.param(xavier_uniform(rng, (d_g,))),
            mention_b=ag.param(np.zeros(())),
            coarse_w=ag.param(xavier_uniform(rng, (d_g, d_g))),
            fine_w1=ag.param(xavier_uniform(rng, (in_dim, hidden))),
            fine_b1=ag.param(np.zeros(hidden)),
            fine_w2=ag.param(xavier_uniform(rng, (hidden,))),
            fine_b2=ag.param(np.zeros(())),
            feat_tok=ag.param(rng.normal(0.0, 0.02, (N_BUCKETS, d_f))),
        )
        for name in features:
            params.feat_tables[name] = ag.param(rng.normal(0.0, 0.02, (N_BUCKETS, d_f)))
        return params

    def tensors(self) -> dict[str, Tensor]:
        out = {
            "sc.mention_w": self.mention_w, "sc.mention_b": self.mention_b,
            "sc.coarse_w": self.coarse_w,
            "sc.fine_w1": self.fine_w1, "sc.fine_b1": self.fine_b1,
            "sc.fine_w2": self.fine_w2, "sc.fine_b2": self.fine_b2,
            "feat.tok": self.feat_tok,
        }
        for name in self.features:
            out[f"feat.{name}"] = self.feat_tables[name]
        return out


def enumerate_spans(doc: Document, max_length: int = 13) -> list[MentionSpan]:
    """All token spans up to ``max_length`` tokens that stay inside one
    paragraph, ordered by (start, end)."""
    if max_length < 1:
        raise ConfigError("maximum span length must be positive")
    spans = []
    for a, b in doc.paragraph_bounds:
        for s in range(a, b + 1):
            for e in range(s, min(s + max_length - 1, b) + 1):
                spans.append(MentionSpan(s, e))
    return spans


def mention_scores(params: ScorerParams, reprs: Tensor) -> Tensor:
    """Unary mention scores, one per span representation row."""
    return ag.add(ag.matvec(reprs, params.mention_w), params.mention_b)


def prune_mentions(scores: np.ndarray, n_tokens: int, ratio: float) -> np.ndarray:
    """Keep the ceil(ratio * n_tokens) best spans; ties keep the earlier
    span. Returns kept positions sorted in span order."""
    if not 0 < ratio:
        raise ConfigError("span keep ratio must be positive")
    budget = min(len(scores), math.ceil(ratio * n_tokens))
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:budget])


def mention_scores_and_prune(
    params: ScorerParams, reprs: Tensor, n_tokens: int, ratio: float
) -> tuple[Tensor, np.ndarray]:
    scores = mention_scores(params, reprs)
    return scores, prune_mentions(scores.value, n_tokens, ratio)


def coarse_scores(params: ScorerParams, reprs: Tensor, scores: Tensor) -> Tensor:
    """Pairwise coarse score matrix: s_i + s_j + g_i W g_j, shape (k, k).
    Only the strict lower triangle (antecedent before mention) is
    meaningful; callers select from it."""
    k = reprs.shape[0]
    bilinear = ag.matmul(ag.matmul(reprs, params.coarse_w), ag.transpose(reprs))
    return ag.add(bilinear, ag.add(ag.reshape(scores, (k, 1)), ag.reshape(scores, (1, k))))


def coarse_prune(coarse: np.ndarray, max_antecedents: int) -> list[np.ndarray]:
    """Per mention, keep the ``max_antecedents`` best earlier mentions by
    coarse score, ties toward the earlier antecedent; results ascending."""
    if max_antecedents < 1:
        raise ConfigError("antecedent budget must be positive")
    out = []
    for i in range(len(coarse)):
        row = coarse[i, :i]
        keep = np.argsort(-row, kind="stable")[:max_antecedents]
        out.append(np.sort(keep))
    return out


def token_distances(spans: list[MentionSpan], mention_idx: np.ndarray, antecedent_idx: np.ndarray) -> np.ndarray:
    """Tokens strictly between antecedent end and mention start, floored
    at zero for nested or overlapping pairs."""
    starts = np.array([s.start for s in spans])
    ends = np.array([s.end for s in spans])
    return np.maximum(starts[mention_idx] - ends[antecedent_idx] - 1, 0)


def _pair_inputs(params, reprs, mention_idx, antecedent_idx, bucket_ids):
    parts = [ag.rows(reprs, mention_idx), ag.rows(reprs, antecedent_idx),
             ag.rows(params.feat_tok, bucket_ids["tok"])]
    for name in params.features:
        parts.append(ag.rows(params.feat_tables[name], bucket_ids[name]))
    return ag.concat(parts, axis=1)


def fine_scores(
    params: ScorerParams,
    reprs: Tensor,
    mention_idx: np.ndarray,
    antecedent_idx: np.ndarray,
    bucket_ids: dict[str, np.ndarray],
    dropout_mask: np.ndarray | None = None,
) -> Tensor:
    """Feed-forward pair scores for (mention, antecedent) index pairs.

    ``bucket_ids`` maps "tok" plus each enabled feature name to bucket
    id arrays. ``dropout_mask`` is an optional pre-scaled mask applied
    to the scorer input during training.
    """
    inputs = _pair_inputs(params, reprs, mention_idx, antecedent_idx, bucket_ids)
    if dropout_mask is not None:
        inputs = ag.mul(inputs, ag.constant(dropout_mask))
    hidden = ag.relu(ag.add(ag.matmul(inputs, params.fine_w1), params.fine_b1))
    return ag.add(ag.matvec(hidden, params.fine_w2), params.fine_b2)


def fine_score(params: ScorerParams, g_i: Tensor, g_j: Tensor, buckets: dict[str, int]) -> Tensor:
    """Single-pair fine score; ``buckets`` holds scalar bucket ids."""
    reprs = ag.stack_rows([g_i, g_j])
    ids = {name: np.array([b]) for name, b in buckets.items()}
    return ag.row(fine_scores(params, reprs, np.array([0]), np.array([1]), ids), 0)


@dataclass
class PairScores:
    """Final pair scores for one document, flattened over mentions.

    ``kept`` holds the surviving spans in span order; rows
    ``pair_offsets[i] : pair_offsets[i + 1]`` of ``scores`` belong to
    mention i and align with ``candidates[i]``.
    """

    kept: list[MentionSpan]
    candidates: list[np.ndarray]
    mention_idx: np.ndarray
    antecedent_idx: np.ndarray
    pair_offsets: np.ndarray
    scores: Tensor


def final_pair_scores(
    params: ScorerParams,
    reprs: Tensor,
    kept: list[MentionSpan],
    candidates: list[np.ndarray],
    coarse: Tensor,
    bucket_ids: dict[str, np.ndarray],
    dropout_mask: np.ndarray | None = None,
) -> PairScores:
    """Combine fine scores with gathered coarse scores into final pair scores."""
    k = len(kept)
    counts = [len(c) for c in candidates]
    mention_idx = np.repeat(np.arange(k), counts)
    antecedent_idx = np.concatenate(candidates) if k else np.zeros(0, dtype=np.intp)
    antecedent_idx = antecedent_idx.astype(np.intp)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
    if len(mention_idx) == 0:
        return PairScores(kept, candidates, mention_idx, antecedent_idx, offsets, ag.constant(np.zeros(0)))
    fine = fine_scores(params, reprs, mention_idx, antecedent_idx, bucket_ids, dropout_mask)
    coarse_flat = ag.gather(ag.reshape(coarse, (k * k,)), mention_idx * k + antecedent_idx)
    return PairScores(kept, candidates, mention_idx, antecedent_idx, offsets,
                      ag.add(fine, coarse_flat))


class UnionFind:
    """Disjoint sets over range(n) with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class Prediction:
    """Predicted clusters for one document, token spans sorted within
    and across clusters; singleton chains are already dropped."""

    doc_id: str
    clusters: list[list[MentionSpan]]

    def to_dict(self, doc: Document) -> dict:
        return {
            "id": self.doc_id,
            "clusters": [[list(doc.char_span(m)) for m in cluster] for cluster in self.clusters],
        }


def decode(doc_id: str, pairs: PairScores) -> Prediction:
    """Greedy antecedent decoding: link each mention to its best-scoring
    candidate when that score beats the fixed zero no-antecedent score;
    exact ties go to no antecedent, ties between candidates go to the
    earlier one. Clusters are the connected components minus singletons."""
    k = len(pairs.kept)
    uf = UnionFind(k)
    values = pairs.scores.value
    for i in range(k):
        lo, hi = pairs.pair_offsets[i], pairs.pair_offsets[i + 1]
        if hi == lo:
            continue
        window = values[lo:hi]
        best = int(np.argmax(window))
        if window[best] > 0.0:
            uf.union(i, int(pairs.candidates[i][best]))
    groups: dict[int, list[MentionSpan]] = {}
    for i in range(k):
        groups.setdefault(uf.find(i), []).append(pairs.kept[i])
    clusters = [sorted(g) for g in groups.values() if len(g) > 1]
    clusters.sort(key=lambda c: c[0])
    return Prediction(doc_id=doc_id, clusters=clusters)
