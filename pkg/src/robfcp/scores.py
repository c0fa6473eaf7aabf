"""Nonconformity scores for probabilistic classifiers.

Two score families are provided, both mapping a predicted class-probability
vector and a candidate label to a value in [0, 1]:

* ``lac``: one minus the probability of the candidate label.  Low scores mean
  the classifier is confident in that label.
* ``aps``: the cumulated probability mass of all labels ranked strictly above
  the candidate, plus a randomized fraction ``u`` of the candidate's own mass.

Scores are computed either one row at a time (:func:`lac_score`,
:func:`aps_score`) or vectorized over a batch (:func:`batch_scores`,
:func:`label_score_matrix`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

# Probability vectors must sum to one within this absolute tolerance.
PROB_ATOL = 1e-9

SCORE_KINDS = ("lac", "aps")


def validate_probabilities(probs: np.ndarray) -> np.ndarray:
    """Validate a (C,) probability vector or (N, C) matrix and return it as float64."""
    p = np.asarray(probs, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
        squeeze = True
    elif p.ndim == 2:
        squeeze = False
    else:
        raise InputError(f"probabilities must be 1- or 2-dimensional, got ndim={p.ndim}")
    if p.shape[1] < 2:
        raise InputError(f"need at least 2 classes, got {p.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise InputError("probabilities must be finite")
    if p.min() < 0.0 or p.max() > 1.0:
        raise InputError("probabilities must lie in [0, 1]")
    sums = p.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > PROB_ATOL:
        raise InputError("probability rows must sum to 1 within 1e-9")
    return p[0] if squeeze else p


def _validate_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.floor(y)):
            raise InputError("labels must be integers")
        y = y.astype(int)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InputError(f"labels must lie in [0, {num_classes - 1}]")
    return y.astype(int)


def lac_score(probs, label: int) -> float:
    """Score = 1 - probability assigned to ``label``."""
    p = validate_probabilities(probs)
    y = _validate_labels(np.array([label]), p.shape[0])[0]
    return float(1.0 - p[y])


def aps_score(probs, label: int, u: float) -> float:
    """Mass of labels ranked strictly above ``label`` plus ``u`` times its own mass."""
    p = validate_probabilities(probs)
    y = _validate_labels(np.array([label]), p.shape[0])[0]
    if not (0.0 <= u <= 1.0):
        raise InputError(f"randomization u must lie in [0, 1], got {u}")
    return float(p[p > p[y]].sum() + p[y] * u)


def lac_scores(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized ``lac`` scores for a batch of (row, label) pairs."""
    p = validate_probabilities(probs)
    y = _validate_labels(labels, p.shape[1])
    return 1.0 - p[np.arange(p.shape[0]), y]


def aps_scores(probs: np.ndarray, labels: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized ``aps`` scores; ``u`` holds one randomization draw per row."""
    p = validate_probabilities(probs)
    y = _validate_labels(labels, p.shape[1])
    u = np.asarray(u, dtype=float)
    if u.shape != (p.shape[0],):
        raise InputError("u must have one entry per row")
    if u.size and (u.min() < 0.0 or u.max() > 1.0):
        raise InputError("randomization u must lie in [0, 1]")
    py = p[np.arange(p.shape[0]), y]
    above = (p * (p > py[:, None])).sum(axis=1)
    return above + py * u


def batch_scores(rows, kind: str = "lac", rng: np.random.Generator | None = None) -> np.ndarray:
    """Compute true-label scores for a list of ``(probability_vector, label)`` pairs.

    For ``kind="aps"`` one uniform draw per row is taken from ``rng``.
    """
    if kind not in SCORE_KINDS:
        raise InputError(f"unknown score kind {kind!r}, expected one of {SCORE_KINDS}")
    rows = list(rows)
    if not rows:
        raise InputError("batch_scores requires at least one row")
    probs = np.stack([np.asarray(p, dtype=float) for p, _ in rows])
    labels = np.array([y for _, y in rows])
    if kind == "lac":
        return lac_scores(probs, labels)
    if rng is None:
        rng = np.random.default_rng()
    u = rng.uniform(0.0, 1.0, size=len(rows))
    return aps_scores(probs, labels, u)


def label_score_matrix(probs: np.ndarray, kind: str = "lac",
                       u: np.ndarray | None = None) -> np.ndarray:
    """Per-label score matrix: entry (i, y) is the score of candidate label y on row i.

    For ``aps`` the same draw ``u[i]`` is shared by every candidate label of
    row i, which keeps prediction sets nested in the quantile threshold.
    """
    p = validate_probabilities(np.atleast_2d(np.asarray(probs, dtype=float)))
    if kind == "lac":
        return 1.0 - p
    if kind != "aps":
        raise InputError(f"unknown score kind {kind!r}, expected one of {SCORE_KINDS}")
    if u is None:
        raise InputError("aps label scores require a u draw per row")
    u = np.asarray(u, dtype=float)
    if u.shape != (p.shape[0],):
        raise InputError("u must have one entry per row")
    # above[i, y] = sum of probabilities strictly greater than p[i, y]
    greater = p[:, None, :] > p[:, :, None]
    above = np.einsum("nc,nyc->ny", p, greater)
    return above + p * u[:, None]


@dataclass(frozen=True)
class TestBatch:
    """Evaluation rows: per-label score matrix plus the true labels."""

    __test__ = False  # "Test" refers to held-out data, not pytest

    label_scores: np.ndarray  # (N, C)
    labels: np.ndarray        # (N,)

    def __post_init__(self):
        s = np.asarray(self.label_scores, dtype=float)
        if s.ndim != 2 or s.shape[1] < 2:
            raise InputError("label_scores must be an (N, C) matrix with C >= 2")
        if s.size and (not np.all(np.isfinite(s)) or s.min() < 0.0 or s.max() > 1.0):
            raise InputError("label scores must lie in [0, 1]")
        y = _validate_labels(self.labels, s.shape[1])
        if y.shape != (s.shape[0],):
            raise InputError("labels must have one entry per row")
        object.__setattr__(self, "label_scores", s)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.label_scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.label_scores.shape[1]

    @property
    def true_label_scores(self) -> np.ndarray:
        return self.label_scores[np.arange(len(self)), self.labels]
