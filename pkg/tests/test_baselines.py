"""Classical reference predictors and their solvers."""

import numpy as np
import pytest
import scipy.sparse as sp

from petcast.baselines import (
    KRR_MAX_TRAIN,
    SUITE_NAMES,
    BaselineResult,
    LogisticModel,
    OrdinalClassifier,
    _conjugate_gradient,
    baseline_suite,
    gi_feature_matrix,
    gi_features,
    krr_fit,
    krr_predict,
    level_to_count,
    logistic_fit,
    mean_predictor,
    median_heuristic,
    ordinal_classifier_fit,
    rbf_kernel,
    ridge_fit,
    ridge_predict,
    to_csr,
)
from petcast.errors import NumericError, ValidationError
from petcast.text import SparseVector


class TestConjugateGradient:
    def test_matches_direct_solve(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = int(rng.integers(2, 15))
            m = rng.normal(size=(d, d))
            a = m @ m.T + 0.5 * np.eye(d)
            b = rng.normal(size=d)
            x = _conjugate_gradient(lambda v: a @ v, b, tol=1e-12, max_iter=500)
            np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-8)

    def test_zero_rhs(self):
        a = np.eye(3)
        x = _conjugate_gradient(lambda v: a @ v, np.zeros(3), tol=1e-10, max_iter=10)
        np.testing.assert_array_equal(x, 0.0)

    def test_nonconvergence_raises(self):
        a = np.diag([1.0, 1e8])
        with pytest.raises(NumericError):
            _conjugate_gradient(lambda v: a @ v, np.array([1.0, 1.0]),
                                tol=1e-14, max_iter=1)


def _centered_residual(x, y, lam, model):
    """Normal-equation residual of the centered system the solver targets."""
    x = np.asarray(x.todense()) if sp.issparse(x) else np.asarray(x, dtype=float)
    xc = x - x.mean(axis=0)
    yc = np.asarray(y, dtype=float) - float(np.mean(y))
    lhs = (xc.T @ xc + lam * np.eye(x.shape[1])) @ model.weights
    return float(np.linalg.norm(lhs - xc.T @ yc))


class TestRidge:
    def test_normal_equation_residual_every_fit(self):
        rng = np.random.default_rng(1)
        for trial in range(25):
            n, d = int(rng.integers(5, 40)), int(rng.integers(1, 10))
            x = rng.normal(size=(n, d))
            y = rng.normal(size=n)
            lam = float(10.0 ** rng.uniform(-3, 1))
            model = ridge_fit(x, y, lam)
            assert _centered_residual(x, y, lam, model) < 1e-6

    def test_matches_closed_form(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        lam = 0.3
        model = ridge_fit(x, y, lam)
        xc = x - x.mean(axis=0)
        yc = y - y.mean()
        want_w = np.linalg.solve(xc.T @ xc + lam * np.eye(4), xc.T @ yc)
        np.testing.assert_allclose(model.weights, want_w, atol=1e-8)
        want_b = y.mean() - x.mean(axis=0) @ want_w
        assert model.intercept == pytest.approx(want_b, abs=1e-8)

    def test_sparse_and_dense_agree(self):
        rng = np.random.default_rng(3)
        dense = rng.normal(size=(25, 6)) * (rng.random(size=(25, 6)) > 0.5)
        y = rng.normal(size=25)
        a = ridge_fit(dense, y, 0.1)
        b = ridge_fit(sp.csr_matrix(dense), y, 0.1)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-8)
        np.testing.assert_allclose(
            ridge_predict(a, dense), ridge_predict(b, sp.csr_matrix(dense)),
            atol=1e-8,
        )

    def test_huge_lambda_shrinks_to_mean(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(20, 3))
        y = rng.normal(size=20) + 5.0
        model = ridge_fit(x, y, 1e12)
        np.testing.assert_allclose(model.predict(x), y.mean(), atol=1e-4)


class TestMean:
    def test_predicts_train_mean(self):
        model = mean_predictor(np.array([1.0, 2.0, 6.0]))
        np.testing.assert_allclose(model.predict(4), 3.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            mean_predictor(np.array([]))


class TestKernel:
    def test_symmetric_unit_diagonal(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(12, 3))
        k = rbf_kernel(x, x, sigma=1.3)
        np.testing.assert_allclose(k, k.T, atol=1e-12)
        np.testing.assert_allclose(np.diag(k), 1.0, atol=1e-12)

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            x = rng.normal(size=(int(rng.integers(2, 15)), 4))
            k = rbf_kernel(x, x, sigma=float(rng.uniform(0.3, 3.0)))
            eigvals = np.linalg.eigvalsh(k)
            assert eigvals.min() > -1e-8

    def test_median_heuristic_two_points(self):
        x = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert median_heuristic(x) == pytest.approx(5.0)

    def test_median_heuristic_identical_points_fallback(self):
        assert median_heuristic(np.zeros((5, 2))) == 1.0

    def test_median_heuristic_seeded_subsample(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(900, 3))
        a = median_heuristic(x, seed=1, sample=100)
        b = median_heuristic(x, seed=1, sample=100)
        assert a == b


class TestKrr:
    def test_single_point_closed_form(self):
        # K = [[1]], so alpha = y / (1 + lam) and the self-prediction follows
        x = np.array([[2.0, 0.0]])
        y = np.array([3.0])
        lam = 0.5
        model = krr_fit(x, y, sigma=1.0, lam=lam)
        assert model.alpha[0] == pytest.approx(3.0 / 1.5, abs=1e-12)
        assert krr_predict(model, x)[0] == pytest.approx(3.0 / 1.5, abs=1e-12)

    def test_small_lambda_interpolates(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(15, 2))
        y = rng.normal(size=15)
        model = krr_fit(x, y, sigma=1.0, lam=1e-10)
        np.testing.assert_allclose(model.predict(x), y, atol=1e-4)

    def test_solution_solves_regularized_system(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        model = krr_fit(x, y, sigma=2.0, lam=0.2)
        k = rbf_kernel(x, x, 2.0)
        np.testing.assert_allclose(
            (k + 0.2 * np.eye(30)) @ model.alpha, y, atol=1e-8
        )

    def test_subsampling_deterministic(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        a = krr_fit(x, y, sigma=1.0, lam=0.1, seed=3, max_train=20)
        b = krr_fit(x, y, sigma=1.0, lam=0.1, seed=3, max_train=20)
        assert a.train_x.shape == (20, 2)
        np.testing.assert_array_equal(a.train_x, b.train_x)
        np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_default_cap_matches_constant(self):
        assert KRR_MAX_TRAIN == 4000

    def test_nonpositive_lambda_rejected(self):
        with pytest.raises(ValidationError):
            krr_fit(np.zeros((2, 1)), np.zeros(2), sigma=1.0, lam=0.0)


class TestLogistic:
    def _separable(self, n=80, seed=11):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 3))
        y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(float)
        return x, y

    def test_first_order_optimality(self):
        x, y = self._separable()
        lam = 0.1
        model = logistic_fit(x, y, lam)
        p = model.predict_proba(x)
        g_w = x.T @ (p - y) + lam * model.weights
        g_b = float(np.sum(p - y))
        assert np.sqrt(float(g_w @ g_w) + g_b * g_b) < 1e-5 * x.shape[0]

    def test_recovers_separating_direction(self):
        x, y = self._separable()
        model = logistic_fit(x, y, 0.1)
        assert model.weights[0] > abs(model.weights[2])
        preds = (model.predict_proba(x) >= 0.5).astype(float)
        assert float(np.mean(preds == y)) > 0.9

    def test_stronger_penalty_shrinks_weights(self):
        x, y = self._separable()
        loose = logistic_fit(x, y, 0.01)
        tight = logistic_fit(x, y, 10.0)
        assert np.linalg.norm(tight.weights) < np.linalg.norm(loose.weights)

    def test_probabilities_stable_for_extreme_logits(self):
        # saturates cleanly instead of overflowing in either branch
        model = LogisticModel(weights=np.array([100.0]), intercept=0.0)
        with np.errstate(over="raise"):
            p = model.predict_proba(np.array([[50.0], [-50.0]]))
        assert p[0] == 1.0 and p[1] == 0.0
        mild = model.predict_proba(np.array([[0.01], [-0.01]]))
        assert 0.0 < mild[1] < 0.5 < mild[0] < 1.0

    def test_sparse_design_supported(self):
        x, y = self._separable()
        a = logistic_fit(x, y, 0.5)
        b = logistic_fit(sp.csr_matrix(x), y, 0.5)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-6)


class TestOrdinalClassifier:
    def _data(self, n=90, seed=12):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 2))
        score = x[:, 0]
        bits = np.column_stack([
            (score > -0.5).astype(float), (score > 0.5).astype(float)
        ])
        return x, bits

    def test_level_counts_confident_heads(self):
        x, bits = self._data()
        clf = ordinal_classifier_fit(x, bits)
        levels = clf.predict_level(x)
        assert levels.min() >= 0 and levels.max() <= 2
        agreement = np.mean(levels == bits.sum(axis=1))
        assert agreement > 0.85

    def test_dev_selection_picks_per_head_lambda(self):
        x, bits = self._data()
        x_dev, bits_dev = self._data(n=40, seed=13)
        clf = ordinal_classifier_fit(x, bits, x_dev, bits_dev, grid=(0.01, 1.0))
        assert len(clf.lams) == 2
        assert all(lam in (0.01, 1.0) for lam in clf.lams)

    def test_level_to_count_representatives(self):
        out = level_to_count(np.array([0, 1, 3]), (10, 100, 1000))
        np.testing.assert_array_equal(out, [1.0, 10.0, 1000.0])

    def test_level_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            level_to_count(np.array([4]), (10, 100, 1000))


class TestGiFeatures:
    CATS = {"positive": {"good", "fair"}, "negative": {"bad"}}

    def test_hand_values_sorted_order(self):
        out = gi_features(["good", "bad", "tax", "fair"], self.CATS)
        # sorted names: negative, positive
        np.testing.assert_allclose(out, [0.25, 0.5])

    def test_empty_document(self):
        np.testing.assert_array_equal(gi_features([], self.CATS), [0.0, 0.0])

    def test_matrix_empty_categories(self):
        assert gi_feature_matrix([["a"], ["b"]], {}).shape == (2, 0)


class TestToCsr:
    def test_roundtrip(self):
        vectors = [
            SparseVector((0, 2), (1.0, 2.0), 4),
            SparseVector((), (), 4),
            SparseVector((3,), (-1.0,), 4),
        ]
        mat = to_csr(vectors)
        want = np.array([[1.0, 0, 2.0, 0], [0, 0, 0, 0], [0, 0, 0, -1.0]])
        np.testing.assert_array_equal(np.asarray(mat.todense()), want)

    def test_dimension_disagreement_rejected(self):
        with pytest.raises(ValidationError):
            to_csr([SparseVector((0,), (1.0,), 2), SparseVector((0,), (1.0,), 3)])


def _suite_inputs(seed=20, n_train=60, n_dev=20, n_test=20):
    """Keyword-driven synthetic corpus shared by the suite tests."""
    rng = np.random.default_rng(seed)
    vocab = 12

    def split(n):
        x = np.zeros((n, vocab))
        counts_x = rng.integers(0, 3, size=(n, vocab))
        x += counts_x
        keyword = rng.random(n) < 0.5
        x[:, 0] = keyword.astype(float)
        y = 5.0 * keyword + rng.normal(scale=0.1, size=n)
        y = np.maximum(y, 0.0)
        return sp.csr_matrix(x), y

    bow, targets, feats, gi = {}, {}, {}, {}
    for name, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        mat, y = split(n)
        bow[name] = mat
        targets[name] = y
        feats[name] = np.asarray(mat.todense())[:, :3]
        gi[name] = np.asarray(mat.todense())[:, :2]
    thresholds = (10, 100)
    bits = {
        name: np.column_stack([
            (np.exp(targets[name]) >= t).astype(float) for t in thresholds
        ])
        for name in ("train", "dev", "test")
    }
    return bow, feats, targets, gi, bits, thresholds


class TestBaselineSuite:
    def test_full_suite_runs_and_orders(self):
        bow, feats, targets, gi, bits, thresholds = _suite_inputs()
        results = baseline_suite(
            bow, feats, targets, seed=0, gi=gi,
            ordinal_bits=bits, thresholds=thresholds,
        )
        assert [r.name for r in results] == list(SUITE_NAMES)
        by_name = {r.name: r for r in results}
        test_y = targets["test"]
        mean_mae = float(np.mean(np.abs(by_name["Mean"].predictions - test_y)))
        linear_mae = float(np.mean(np.abs(by_name["Linear_BoW"].predictions - test_y)))
        assert linear_mae < 0.2 < mean_mae

    def test_deterministic_given_seed(self):
        bow, feats, targets, gi, bits, thresholds = _suite_inputs()
        kwargs = dict(gi=gi, ordinal_bits=bits, thresholds=thresholds)
        a = baseline_suite(bow, feats, targets, seed=5, **kwargs)
        b = baseline_suite(bow, feats, targets, seed=5, **kwargs)
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.predictions, rb.predictions)
            assert ra.hyper == rb.hyper

    def test_classifier_entry_flagged(self):
        bow, feats, targets, gi, bits, thresholds = _suite_inputs()
        (result,) = baseline_suite(
            bow, feats, targets, names=("Logistic_ord",),
            ordinal_bits=bits, thresholds=thresholds,
        )
        assert result.kind == "classifier"
        assert isinstance(result, BaselineResult)
        # predictions are logs of representative counts from the ladder
        reps = {0.0} | {np.log(float(t)) for t in thresholds}
        assert {float(p) for p in result.predictions} <= reps

    def test_reports_filled_when_counts_given(self):
        bow, feats, targets, _, _, _ = _suite_inputs()
        (result,) = baseline_suite(
            bow, feats, targets, names=("Mean",),
            test_counts=np.exp(targets["test"]), report_edges=(10.0, 100.0),
        )
        assert result.report is not None
        assert len(result.report.per_bin_f) == 3
        assert result.report.mae >= 0.0

    def test_unknown_name_rejected(self):
        bow, feats, targets, _, _, _ = _suite_inputs()
        with pytest.raises(ValidationError, match="unknown baseline"):
            baseline_suite(bow, feats, targets, names=("Nope",))

    def test_gi_required_for_linear_gi(self):
        bow, feats, targets, _, _, _ = _suite_inputs()
        with pytest.raises(ValidationError, match="Linear_GI"):
            baseline_suite(bow, feats, targets, names=("Linear_GI",))

    def test_bits_required_for_classifier(self):
        bow, feats, targets, _, _, _ = _suite_inputs()
        with pytest.raises(ValidationError, match="Logistic_ord"):
            baseline_suite(bow, feats, targets, names=("Logistic_ord",))
