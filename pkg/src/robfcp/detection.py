"""Nearest-neighbour screening of client reports.

Benign clients sketch samples from similar score distributions, so their
characterization vectors cluster; forged vectors sit away from that cluster.
Each client gets a *maliciousness score*: the average distance to its
``k_b - 1`` nearest other reports.  With at least ``k_b`` benign clients, a
benign report has ``k_b - 1`` honest neighbours keeping its score low, while a
forged report must reach across to the cluster.  The ``k_b`` lowest-scoring
clients form the benign set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .sketch import ClientReport

#: Distance choices accepted by :func:`distance_matrix` besides integer p >= 1.
NAMED_NORMS = ("inf", "cosine")


def as_vector_matrix(reports) -> np.ndarray:
    """Stack reports (or raw vectors) into a (K, H) float matrix.

    Accepts a list of :class:`ClientReport` with identical edges, a list of
    1-d arrays, or an already-stacked 2-d array.
    """
    if isinstance(reports, np.ndarray) and reports.ndim == 2:
        return np.asarray(reports, dtype=float)
    items = list(reports)
    if not items:
        raise InputError("need at least one report")
    if isinstance(items[0], ClientReport):
        edges = items[0].edges
        for r in items[1:]:
            if not np.array_equal(r.edges, edges):
                raise InputError("all reports must share the same bin edges")
        return np.stack([r.v for r in items])
    return np.stack([np.asarray(v, dtype=float) for v in items])


def _pairwise(vectors: np.ndarray, p) -> np.ndarray:
    diff = vectors[:, None, :] - vectors[None, :, :]
    if p == "cosine":
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            raise InputError("cosine distance undefined for all-zero vectors")
        sim = (vectors @ vectors.T) / np.outer(norms, norms)
        d = 1.0 - np.clip(sim, -1.0, 1.0)
        np.fill_diagonal(d, 0.0)
        return d
    if p == math.inf or p == "inf":
        return np.abs(diff).max(axis=2)
    return (np.abs(diff) ** p).sum(axis=2) ** (1.0 / p)


def _validate_norm(p):
    if isinstance(p, str):
        if p not in NAMED_NORMS:
            raise InputError(f"unknown norm {p!r}, expected integer >= 1, 'inf', or 'cosine'")
        return p
    if p == math.inf:
        return math.inf
    if isinstance(p, (int, np.integer)) and p >= 1:
        return int(p)
    raise InputError(f"norm order must be an integer >= 1, 'inf', or 'cosine'; got {p!r}")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric pairwise distances between client vectors, zero diagonal."""

    d: np.ndarray
    p: object


def pairwise_distances(reports, p=2) -> DistanceMatrix:
    """Pairwise l_p (or cosine) distances between all report vectors."""
    norm = _validate_norm(p)
    vectors = as_vector_matrix(reports)
    if vectors.shape[0] < 2:
        raise InputError("need at least 2 reports for pairwise distances")
    return DistanceMatrix(d=_pairwise(vectors, norm), p=norm)


def maliciousness_scores(distances: DistanceMatrix, k_b: int) -> np.ndarray:
    """Average distance to each client's k_b - 1 nearest other reports."""
    d = distances.d
    k = d.shape[0]
    if not 2 <= k_b <= k:
        raise InputError(f"k_b must lie in [2, {k}], got {k_b}")
    off = d[~np.eye(k, dtype=bool)].reshape(k, k - 1)
    part = np.partition(off, k_b - 2, axis=1)[:, : k_b - 1]
    return part.mean(axis=1)


@dataclass(frozen=True)
class MaliciousnessRanking:
    """Per-client scores, the selected benign set, and the k_b used to build it."""

    scores: np.ndarray
    benign_set: tuple[int, ...]
    k_b_used: int

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        object.__setattr__(self, "benign_set", tuple(int(i) for i in self.benign_set))

    def order(self) -> np.ndarray:
        """Client ids sorted by ascending maliciousness, ties by lowest id."""
        return np.argsort(self.scores, kind="stable")


def select_benign(scores: np.ndarray, k_b: int) -> MaliciousnessRanking:
    """Keep the ``k_b`` lowest-scoring clients, ties broken by lowest id."""
    s = np.asarray(scores, dtype=float)
    if not 1 <= k_b <= s.size:
        raise InputError(f"k_b must lie in [1, {s.size}], got {k_b}")
    order = np.argsort(s, kind="stable")
    benign = tuple(sorted(int(i) for i in order[:k_b]))
    return MaliciousnessRanking(scores=s, benign_set=benign, k_b_used=int(k_b))


def rank_reports(reports, k_b: int, p=2) -> MaliciousnessRanking:
    """Score all reports and select the ``k_b`` most benign-looking ones."""
    distances = pairwise_distances(reports, p=p)
    return select_benign(maliciousness_scores(distances, k_b), k_b)
