"""Unit tests for nonconformity scores."""

import numpy as np
import pytest

from robfcp.errors import InputError
from robfcp.scores import (
    TestBatch,
    aps_score,
    aps_scores,
    batch_scores,
    lac_score,
    lac_scores,
    label_score_matrix,
    validate_probabilities,
)


class TestLac:
    def test_hand_values(self):
        assert lac_score([0.7, 0.2, 0.1], 0) == pytest.approx(0.3)
        assert lac_score([0.7, 0.2, 0.1], 1) == pytest.approx(0.8)
        assert lac_score([0.7, 0.2, 0.1], 2) == pytest.approx(0.9)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(42)
        probs = rng.dirichlet(np.ones(6), size=40)
        labels = rng.integers(0, 6, size=40)
        batch = lac_scores(probs, labels)
        for i in range(40):
            assert batch[i] == pytest.approx(lac_score(probs[i], labels[i]))

    def test_range(self):
        rng = np.random.default_rng(7)
        probs = rng.dirichlet(np.ones(4), size=100)
        labels = rng.integers(0, 4, size=100)
        s = lac_scores(probs, labels)
        assert s.min() >= 0.0 and s.max() <= 1.0


class TestAps:
    """APS: mass strictly above the candidate plus u times its own mass."""

    def test_hand_values(self):
        p = [0.5, 0.3, 0.2]
        assert aps_score(p, 0, 0.0) == pytest.approx(0.0)
        assert aps_score(p, 0, 1.0) == pytest.approx(0.5)
        assert aps_score(p, 1, 0.5) == pytest.approx(0.5 + 0.15)
        assert aps_score(p, 2, 0.0) == pytest.approx(0.8)
        assert aps_score(p, 2, 1.0) == pytest.approx(1.0)

    def test_ties_share_no_mass(self):
        # equal probabilities are not "strictly above" each other
        p = [0.4, 0.4, 0.2]
        assert aps_score(p, 0, 0.0) == pytest.approx(0.0)
        assert aps_score(p, 1, 0.0) == pytest.approx(0.0)

    def test_u_zero_vs_one_spans_own_mass(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.ones(5))
        for y in range(5):
            lo = aps_score(p, y, 0.0)
            hi = aps_score(p, y, 1.0)
            assert hi - lo == pytest.approx(p[y])

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(11)
        probs = rng.dirichlet(np.ones(5), size=30)
        labels = rng.integers(0, 5, size=30)
        u = rng.uniform(size=30)
        batch = aps_scores(probs, labels, u)
        for i in range(30):
            assert batch[i] == pytest.approx(aps_score(probs[i], labels[i], u[i]))

    def test_u_out_of_range(self):
        with pytest.raises(InputError):
            aps_score([0.5, 0.5], 0, 1.5)
        with pytest.raises(InputError):
            aps_score([0.5, 0.5], 0, -0.1)


class TestValidation:
    def test_rejects_bad_sums(self):
        with pytest.raises(InputError):
            validate_probabilities([0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(InputError):
            validate_probabilities([-0.1, 1.1])

    def test_rejects_single_class(self):
        with pytest.raises(InputError):
            validate_probabilities([1.0])

    def test_rejects_nan(self):
        with pytest.raises(InputError):
            validate_probabilities([np.nan, 1.0])

    def test_accepts_tolerance(self):
        validate_probabilities([0.5, 0.5 + 5e-10])

    def test_rejects_bad_labels(self):
        with pytest.raises(InputError):
            lac_score([0.5, 0.5], 2)
        with pytest.raises(InputError):
            lac_score([0.5, 0.5], -1)


class TestBatchScores:
    def test_lac_batch(self):
        rows = [([0.7, 0.3], 0), ([0.2, 0.8], 1)]
        np.testing.assert_allclose(batch_scores(rows), [0.3, 0.2])

    def test_aps_batch_deterministic_with_rng(self):
        rows = [([0.5, 0.3, 0.2], 1), ([0.2, 0.6, 0.2], 0)]
        a = batch_scores(rows, kind="aps", rng=np.random.default_rng(9))
        b = batch_scores(rows, kind="aps", rng=np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            batch_scores([([0.5, 0.5], 0)], kind="raps")

    def test_empty(self):
        with pytest.raises(InputError):
            batch_scores([])


class TestLabelScoreMatrix:
    def test_lac_is_one_minus_probs(self):
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.ones(4), size=10)
        np.testing.assert_allclose(label_score_matrix(p, "lac"), 1.0 - p)

    def test_aps_matches_scalar_per_label(self):
        rng = np.random.default_rng(5)
        p = rng.dirichlet(np.ones(5), size=12)
        u = rng.uniform(size=12)
        m = label_score_matrix(p, "aps", u)
        for i in range(12):
            for y in range(5):
                assert m[i, y] == pytest.approx(aps_score(p[i], y, u[i]))

    def test_aps_requires_u(self):
        with pytest.raises(InputError):
            label_score_matrix(np.array([[0.5, 0.5]]), "aps")

    def test_true_label_column_matches_batch(self):
        rng = np.random.default_rng(8)
        p = rng.dirichlet(np.ones(3), size=20)
        labels = rng.integers(0, 3, size=20)
        m = label_score_matrix(p, "lac")
        np.testing.assert_allclose(m[np.arange(20), labels], lac_scores(p, labels))


class TestTestBatch:
    def test_round_trip(self):
        rng = np.random.default_rng(4)
        p = rng.dirichlet(np.ones(3), size=15)
        labels = rng.integers(0, 3, size=15)
        batch = TestBatch(label_score_matrix(p, "lac"), labels)
        assert len(batch) == 15
        assert batch.num_classes == 3
        np.testing.assert_allclose(batch.true_label_scores, lac_scores(p, labels))

    def test_rejects_out_of_range_scores(self):
        with pytest.raises(InputError):
            TestBatch(np.array([[0.5, 1.5]]), np.array([0]))

    def test_rejects_label_shape_mismatch(self):
        with pytest.raises(InputError):
            TestBatch(np.array([[0.5, 0.5]]), np.array([0, 1]))
