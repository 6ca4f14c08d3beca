"""Link-based entity-aware coreference scoring.

Each entity contributes links weighted by its size; singletons are
excluded from both sides. Documents aggregate by summing numerators
and denominators before the final division. All arithmetic is exact
(:mod:`fractions`), with floats derived at the end, so two differently
factored implementations can be compared for equality, not closeness.

Two implementations are provided on purpose: :func:`lea` computes link
counts in closed form, :func:`lea_oracle` enumerates mention pairs one
by one. They must agree exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations


@dataclass
class LeaScore:
    precision: float
    recall: float
    f1: float
    precision_exact: Fraction
    recall_exact: Fraction
    f1_exact: Fraction
    notes: tuple[str, ...] = ()


def _entities(clusters) -> list[frozenset]:
    """Non-singleton clusters as frozensets; duplicates within a cluster collapse."""
    out = []
    for cluster in clusters:
        entity = frozenset(cluster)
        if len(entity) >= 2:
            out.append(entity)
    return out


def _closed_resolved(entity: frozenset, against: list[frozenset]) -> int:
    resolved = 0
    for other in against:
        common = len(entity & other)
        resolved += common * (common - 1) // 2
    return resolved


def _enumerated_resolved(entity: frozenset, against: list[frozenset]) -> int:
    resolved = 0
    for a, b in combinations(sorted(entity, key=repr), 2):
        if any(a in other and b in other for other in against):
            resolved += 1
    return resolved


def _links(entity: frozenset) -> int:
    return len(entity) * (len(entity) - 1) // 2


def _enumerated_links(entity: frozenset) -> int:
    return sum(1 for _ in combinations(sorted(entity, key=repr), 2))


def _one_side(key_map, response_map, resolved_fn, links_fn) -> tuple[Fraction, int]:
    numerator = Fraction(0)
    denominator = 0
    for doc_id, clusters in key_map.items():
        entities = _entities(clusters)
        against = _entities(response_map.get(doc_id, []))
        for entity in entities:
            size = len(entity)
            numerator += size * Fraction(resolved_fn(entity, against), links_fn(entity))
            denominator += size
    return numerator, denominator


def _combine(recall_parts, precision_parts) -> LeaScore:
    notes = []
    r_num, r_den = recall_parts
    p_num, p_den = precision_parts
    if r_den == 0:
        notes.append("key has no cluster with two or more mentions; recall set to 0")
        recall = Fraction(0)
    else:
        recall = r_num / r_den
    if p_den == 0:
        notes.append("response has no cluster with two or more mentions; precision set to 0")
        precision = Fraction(0)
    else:
        precision = p_num / p_den
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else Fraction(0)
    for note in notes:
        warnings.warn(note, stacklevel=3)
    return LeaScore(
        precision=float(precision), recall=float(recall), f1=float(f1),
        precision_exact=precision, recall_exact=recall, f1_exact=f1,
        notes=tuple(notes),
    )


def lea(key: dict[str, list], response: dict[str, list]) -> LeaScore:
    """Score predicted clusters against gold clusters.

    Both arguments map document id to a list of clusters, each cluster
    an iterable of hashable mentions. Documents missing from one side
    count as having no clusters there.
    """
    recall_parts = _one_side(key, response, _closed_resolved, _links)
    precision_parts = _one_side(response, key, _closed_resolved, _links)
    return _combine(recall_parts, precision_parts)


def lea_oracle(key: dict[str, list], response: dict[str, list]) -> LeaScore:
    """Reference implementation that enumerates every mention pair."""
    recall_parts = _one_side(key, response, _enumerated_resolved, _enumerated_links)
    precision_parts = _one_side(response, key, _enumerated_resolved, _enumerated_links)
    return _combine(recall_parts, precision_parts)
