"""Tests for pairwise distances, maliciousness scoring, and benign selection."""

import math

import numpy as np
import pytest

from robfcp.detection import (
    maliciousness_scores,
    pairwise_distances,
    rank_reports,
    select_benign,
)
from robfcp.errors import InputError
from robfcp.sketch import sketch_scores, uniform_bin_edges


def _dist(vectors, p=2):
    return pairwise_distances(np.asarray(vectors, dtype=float), p=p)


class TestPairwiseDistances:
    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(42)
        vecs = rng.dirichlet(np.ones(6), size=5)
        for p in (1, 2, 3, "inf", "cosine"):
            d = _dist(vecs, p=p).d
            np.testing.assert_allclose(d, d.T)
            np.testing.assert_allclose(np.diag(d), 0.0, atol=1e-12)

    def test_l1_hand_values(self):
        d = _dist([[1.0, 0.0], [0.0, 1.0]], p=1).d
        assert d[0, 1] == pytest.approx(2.0)

    def test_l2_hand_values(self):
        d = _dist([[1.0, 0.0], [0.0, 1.0]], p=2).d
        assert d[0, 1] == pytest.approx(math.sqrt(2.0))

    def test_inf_norm(self):
        d = _dist([[1.0, 0.0], [0.4, 0.6]], p="inf").d
        assert d[0, 1] == pytest.approx(0.6)

    def test_cosine(self):
        # orthogonal vectors -> cosine distance 1; identical -> 0
        d = _dist([[1.0, 0.0], [0.0, 1.0]], p="cosine").d
        assert d[0, 1] == pytest.approx(1.0)
        d = _dist([[0.5, 0.5], [0.5, 0.5]], p="cosine").d
        assert d[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_accepts_reports(self):
        edges = uniform_bin_edges(4)
        reports = [sketch_scores(i, [0.1 * (i + 1)], edges) for i in range(3)]
        d = pairwise_distances(reports, p=1)
        assert d.d.shape == (3, 3)

    def test_rejects_single_client(self):
        with pytest.raises(InputError):
            _dist([[1.0, 0.0]])

    def test_rejects_bad_norm(self):
        with pytest.raises(InputError):
            _dist([[1.0, 0.0], [0.0, 1.0]], p=0)
        with pytest.raises(InputError):
            _dist([[1.0, 0.0], [0.0, 1.0]], p="manhattan")

    def test_mixed_edges_rejected(self):
        a = sketch_scores(0, [0.1], uniform_bin_edges(4))
        b = sketch_scores(1, [0.1], uniform_bin_edges(5))
        with pytest.raises(InputError):
            pairwise_distances([a, b])


class TestMaliciousnessScores:
    def test_single_neighbor(self):
        d = _dist([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], p=2)
        m = maliciousness_scores(d, k_b=2)
        np.testing.assert_allclose(m, [0.0, 0.0, math.sqrt(2.0)])

    def test_hand_computed_l1_example(self):
        """Four 2-bin vectors; mean of the 2 nearest ℓ1 neighbors per row."""
        vecs = [[1.0, 0.0], [0.9, 0.1], [0.8, 0.2], [0.0, 1.0]]
        m = maliciousness_scores(_dist(vecs, p=1), k_b=3)
        np.testing.assert_allclose(m, [0.3, 0.2, 0.3, 1.7])

    def test_identical_vectors_score_zero(self):
        vecs = np.tile([0.25, 0.75], (5, 1))
        m = maliciousness_scores(_dist(vecs), k_b=3)
        np.testing.assert_allclose(m, 0.0, atol=1e-12)

    def test_k_b_bounds(self):
        d = _dist([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        with pytest.raises(InputError):
            maliciousness_scores(d, k_b=1)
        with pytest.raises(InputError):
            maliciousness_scores(d, k_b=4)

    def test_isolation_monotonicity(self):
        """Pushing one client further from everyone cannot lower its score."""
        rng = np.random.default_rng(7)
        for _ in range(20):
            k = int(rng.integers(4, 9))
            vecs = rng.dirichlet(np.ones(5), size=k)
            k_b = int(rng.integers(2, k + 1))
            before = maliciousness_scores(_dist(vecs, p=1), k_b)
            target = int(rng.integers(k))
            # an extreme corner vector is at least as far from every simplex point
            pushed = vecs.copy()
            pushed[target] = np.eye(5)[0] if vecs[target, 0] < 0.5 else np.eye(5)[1]
            d0, d1 = _dist(vecs, p=1).d, _dist(pushed, p=1).d
            if np.all(d1[target] >= d0[target] - 1e-12):
                after = maliciousness_scores(_dist(pushed, p=1), k_b)
                assert after[target] >= before[target] - 1e-12

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        vecs = rng.dirichlet(np.ones(4), size=6)
        perm = rng.permutation(6)
        m = maliciousness_scores(_dist(vecs, p=2), k_b=4)
        m_perm = maliciousness_scores(_dist(vecs[perm], p=2), k_b=4)
        np.testing.assert_allclose(m_perm, m[perm])


class TestSelectBenign:
    def test_spec_of_hand_example(self):
        ranking = select_benign(np.array([0.3, 0.2, 0.3, 1.7]), k_b=3)
        assert ranking.benign_set == (0, 1, 2)
        assert ranking.k_b_used == 3

    def test_tie_break_lowest_id(self):
        ranking = select_benign(np.array([1.0, 1.0, 1.0, 1.0]), k_b=2)
        assert ranking.benign_set == (0, 1)

    def test_clear_outlier(self):
        ranking = select_benign(np.array([5.0, 1.0, 1.0, 1.0]), k_b=3)
        assert ranking.benign_set == (1, 2, 3)

    def test_k_b_full_range(self):
        scores = np.array([0.4, 0.1, 0.3])
        assert select_benign(scores, 1).benign_set == (1,)
        assert select_benign(scores, 3).benign_set == (0, 1, 2)
        with pytest.raises(InputError):
            select_benign(scores, 0)
        with pytest.raises(InputError):
            select_benign(scores, 4)

    def test_order_is_stable_sort(self):
        ranking = select_benign(np.array([0.2, 0.1, 0.2, 0.05]), k_b=4)
        assert tuple(ranking.order()) == (3, 1, 0, 2)


class TestRankReports:
    def test_end_to_end_separation(self):
        """Far-away attackers are excluded whenever they are a strict minority."""
        rng = np.random.default_rng(42)
        edges = uniform_bin_edges(10)
        for _ in range(20):
            k = int(rng.integers(4, 9))
            k_m = int(rng.integers(1, (k - 1) // 2 + 1))
            reports = []
            for cid in range(k):
                if cid < k - k_m:
                    scores = rng.uniform(0.0, 0.3, size=200)
                else:
                    scores = rng.uniform(0.8, 1.0, size=200)
                reports.append(sketch_scores(cid, scores, edges))
            ranking = rank_reports(reports, k_b=k - k_m, p=2)
            assert ranking.benign_set == tuple(range(k - k_m))

    def test_permutation_maps_ids(self):
        rng = np.random.default_rng(5)
        edges = uniform_bin_edges(8)
        base = [rng.uniform(0.0, 0.4, size=100) for _ in range(4)]
        base.append(rng.uniform(0.9, 1.0, size=100))
        reports = [sketch_scores(i, s, edges) for i, s in enumerate(base)]
        ranking = rank_reports(reports, k_b=4)
        assert ranking.benign_set == (0, 1, 2, 3)
        # swap the outlier into slot 0
        swapped = [base[4], base[1], base[2], base[3], base[0]]
        reports2 = [sketch_scores(i, s, edges) for i, s in enumerate(swapped)]
        ranking2 = rank_reports(reports2, k_b=4)
        assert ranking2.benign_set == (1, 2, 3, 4)
