
import numpy as np
import pytest

from covtune.data import LabeledDataset
from covtune.features import MonomialBasis, feature_weights, monomial_features
from covtune.kernels import KernelSpec, gram, kernel_eval
from covtune.svm import (
    SvmConfig,
    gram_tensor,
    loo_mse_select,
    project_box_sumzero,
    svm_predict,
    train_svc,
    train_svr,
)


def reference_svr_objective(K, y, box, eps):
    """Textbook tube-regression dual solved as a QP over split coefficients.

    Independent of the production solver: builds the standard 2N-variable
    quadratic program and hands it to cvxopt.
    """
    import cvxopt

    cvxopt.solvers.options["show_progress"] = False
    cvxopt.solvers.options["abstol"] = 1e-10
    cvxopt.solvers.options["reltol"] = 1e-10
    cvxopt.solvers.options["feastol"] = 1e-10
    n = len(y)
    P = np.block([[K, -K], [-K, K]])
    P = P + 1e-12 * np.eye(2 * n)
    q = np.concatenate([eps - y, eps + y])
    G = np.vstack([np.eye(2 * n), -np.eye(2 * n)])
    h = np.concatenate([np.full(2 * n, box), np.zeros(2 * n)])
    A = np.concatenate([np.ones(n), -np.ones(n)])[None, :]
    sol = cvxopt.solvers.qp(
        cvxopt.matrix(P), cvxopt.matrix(q), cvxopt.matrix(G), cvxopt.matrix(h),
        cvxopt.matrix(A), cvxopt.matrix(np.zeros(1)))
    beta = np.asarray(sol["x"]).ravel()
    alpha = beta[:n] - beta[n:]
    obj = 0.5 * alpha @ K @ alpha + eps * np.abs(alpha).sum() - y @ alpha
    return float(obj), alpha


def dual_objective(K, y, alpha, eps):
    return float(0.5 * alpha @ K @ alpha + eps * np.abs(alpha).sum() - y @ alpha)


class TestTrainSvr:
    def test_two_point_analytic_solution(self):
        data = LabeledDataset(X=np.array([[0.0], [1.0]]), y=np.array([0.0, 1.0]))
        model = train_svr(data, KernelSpec.linear(),
                          SvmConfig(q=1, C=10.0, epsilon=0.0))
        assert np.allclose(model.alpha, [-1.0, 1.0], atol=1e-6)
        assert model.b == pytest.approx(0.0, abs=1e-6)
        assert svm_predict(model, [0.5]) == pytest.approx(0.5, abs=1e-6)

    def test_vanishing_budget_collapses_coefficients(self, rng):
        data = LabeledDataset(X=rng.normal(size=(6, 2)), y=rng.normal(size=6))
        model = train_svr(data, KernelSpec.se(0.5),
                          SvmConfig(q=1, C=1e-9, epsilon=0.0))
        assert np.all(np.abs(model.alpha) <= 1e-9 / 6 + 1e-15)
        # predictions collapse to the constant b
        preds = {svm_predict(model, x) for x in map(tuple, rng.normal(size=(4, 2)))}
        assert max(preds) - min(preds) < 1e-8

    def test_matches_reference_qp_objective(self, rng):
        # 10 random small problems against the independent QP solver
        for trial in range(10):
            r = np.random.default_rng(1000 + trial)
            n = int(r.integers(4, 9))
            X = r.uniform(-1, 1, (n, 2))
            y = r.normal(size=n)
            C = float(r.uniform(0.5, 20.0))
            eps = float(r.choice([0.0, 0.05, 0.1]))
            spec = KernelSpec.se(0.6)
            K = gram(spec, X, 0.0)
            data = LabeledDataset(X=X, y=y)
            model = train_svr(data, spec, SvmConfig(q=1, C=C, epsilon=eps))
            ours = dual_objective(K, y, model.alpha, eps)
            ref, _ = reference_svr_objective(K, y, C / n, eps)
            assert ours == pytest.approx(ref, abs=1e-6)

    def test_dual_feasibility_and_descent(self, rng):
        data = LabeledDataset(X=rng.uniform(-1, 1, (12, 3)),
                              y=rng.normal(size=12))
        model = train_svr(data, KernelSpec.se(0.4),
                          SvmConfig(q=1, C=5.0, epsilon=0.02))
        box = 5.0 / 12
        assert abs(model.alpha.sum()) <= 1e-8
        assert np.all(np.abs(model.alpha) <= box + 1e-10)
        obj = np.array(model.diagnostics.objective)
        assert np.all(np.diff(obj) <= 1e-12)
        assert obj[-1] <= 0.0  # no worse than alpha = 0

    def test_q2_solver_feasible_descending(self):
        for seed in range(20):
            r = np.random.default_rng(seed)
            data = LabeledDataset(X=r.uniform(-1, 1, (4, 2)), y=r.normal(size=4))
            model = train_svr(data, KernelSpec.polynomial(2),
                              SvmConfig(q=2, C=4.0, epsilon=0.01))
            assert abs(model.alpha.sum()) <= 1e-8
            assert np.all(np.abs(model.alpha) <= 1.0 + 1e-10)
            obj = np.array(model.diagnostics.objective)
            assert np.all(np.diff(obj) <= 0)
            if not np.allclose(data.y, data.y[0]):
                assert obj[-1] < 0.0

    def test_tractability_guard(self, rng):
        data = LabeledDataset(X=rng.normal(size=(300, 2)),
                              y=rng.normal(size=300))
        with pytest.raises(ValueError, match="guard"):
            train_svr(data, KernelSpec.polynomial(2), SvmConfig(q=3, C=1.0))

    def test_needs_two_points(self):
        data = LabeledDataset(X=np.array([[1.0]]), y=np.array([1.0]))
        with pytest.raises(ValueError):
            train_svr(data, KernelSpec.linear(), SvmConfig())


class TestTrainSvc:
    def test_two_point_analytic_solution(self):
        data = LabeledDataset(X=np.array([[0.0], [1.0]]), y=np.array([-1.0, 1.0]))
        model = train_svc(data, KernelSpec.linear(),
                          SvmConfig(q=1, C=8.0, task="classification"))
        assert np.allclose(model.alpha, [-2.0, 2.0], atol=1e-6)
        assert model.b == pytest.approx(-1.0, abs=1e-6)
        assert svm_predict(model, [0.0]) == pytest.approx(-1.0, abs=1e-6)
        assert svm_predict(model, [1.0]) == pytest.approx(1.0, abs=1e-6)

    def test_label_flip_negates_solution(self, rng):
        X = rng.normal(size=(8, 2))
        y = np.sign(X[:, 0] + 0.3 * rng.normal(size=8))
        y[y == 0] = 1.0
        if len(set(y)) < 2:
            y[0] = -y[0]
        cfg = SvmConfig(q=1, C=5.0, task="classification")
        a = train_svc(LabeledDataset(X=X, y=y), KernelSpec.se(0.8), cfg)
        b = train_svc(LabeledDataset(X=X, y=-y), KernelSpec.se(0.8), cfg)
        assert np.allclose(a.alpha, -b.alpha, atol=1e-8)
        assert a.b == pytest.approx(-b.b, abs=1e-8)
        x = rng.normal(size=2)
        assert svm_predict(a, x) == pytest.approx(-svm_predict(b, x), abs=1e-8)

    def test_separable_blobs_perfect_training_accuracy(self):
        r = np.random.default_rng(7)
        X = np.vstack([r.normal((-2, -2), 0.4, (15, 2)),
                       r.normal((2, 2), 0.4, (15, 2))])
        y = np.concatenate([-np.ones(15), np.ones(15)])
        model = train_svc(LabeledDataset(X=X, y=y), KernelSpec.se(2.0),
                          SvmConfig(q=1, C=50.0, task="classification"))
        preds = np.array([svm_predict(model, x) for x in X])
        assert np.all(np.sign(preds) == y)

    def test_single_class_rejected(self):
        data = LabeledDataset(X=np.eye(3), y=np.ones(3))
        with pytest.raises(ValueError, match="both classes"):
            train_svc(data, KernelSpec.linear(), SvmConfig(task="classification"))

    def test_feasibility(self, rng):
        X = rng.normal(size=(10, 2))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        if len(set(y)) < 2:
            y[0] = -y[0]
        model = train_svc(LabeledDataset(X=X, y=y), KernelSpec.se(1.0),
                          SvmConfig(q=1, C=3.0, task="classification"))
        box = 3.0 / 10
        assert abs(model.alpha.sum()) <= 1e-8
        assert np.all(y * model.alpha >= -1e-12)
        assert np.all(y * model.alpha <= box + 1e-10)


class TestPredict:
    def test_all_zero_coefficients_return_bias(self):
        data = LabeledDataset(X=np.array([[0.0], [1.0]]), y=np.array([3.0, 3.0]))
        model = train_svr(data, KernelSpec.se(1.0),
                          SvmConfig(q=1, C=10.0, epsilon=0.5))
        assert np.all(model.alpha == 0.0)
        assert svm_predict(model, [0.3]) == pytest.approx(model.b)

    def test_q1_representor_identity(self, rng):
        # prediction equals <w, phi(x)> + b with w from the dual expansion
        basis = MonomialBasis(2, 2)
        spec = KernelSpec.polynomial(2)
        tau = feature_weights(spec, basis)
        data = LabeledDataset(X=rng.uniform(-1, 1, (6, 2)), y=rng.normal(size=6))
        model = train_svr(data, spec, SvmConfig(q=1, C=5.0, epsilon=0.01))
        w = sum(a * tau * monomial_features(x, basis)
                for a, x in zip(model.alpha, model.X))
        for _ in range(5):
            x = rng.uniform(-1, 1, 2)
            lhs = svm_predict(model, x)
            rhs = float(w @ (tau * monomial_features(x, basis))) + model.b
            assert rhs == pytest.approx(lhs, abs=1e-8)

    def test_q2_representor_identity(self, rng):
        # Eq-7 prediction equals the feature-space form with the implied
        # primal weights (odd power of the dual expansion)
        basis = MonomialBasis(2, 2)
        spec = KernelSpec.polynomial(2)
        tau = feature_weights(spec, basis)
        data = LabeledDataset(X=rng.uniform(-1, 1, (3, 2)), y=rng.normal(size=3))
        model = train_svr(data, spec, SvmConfig(q=2, C=5.0, epsilon=0.0))
        phi = lambda x: tau ** 0.5 * monomial_features(x, basis)  # tau^(2/2q)
        S = sum(a * phi(x) for a, x in zip(model.alpha, model.X))
        w = np.sign(S) * np.abs(S) ** 3
        for _ in range(5):
            x = rng.uniform(-1, 1, 2)
            lhs = svm_predict(model, x)
            rhs = float(w @ phi(x)) + model.b
            assert rhs == pytest.approx(lhs, abs=1e-8)

    def test_q2_prediction_matches_tensor_contraction(self, rng):
        data = LabeledDataset(X=rng.uniform(-1, 1, (4, 2)), y=rng.normal(size=4))
        spec = KernelSpec.se(0.9)
        model = train_svr(data, spec, SvmConfig(q=2, C=3.0, epsilon=0.01))
        x = rng.uniform(-1, 1, 2)
        a = model.alpha
        expected = sum(
            a[i] * a[j] * a[k] * kernel_eval(spec, [x, data.X[i], data.X[j], data.X[k]])
            for i in range(4) for j in range(4) for k in range(4)
        ) + model.b
        assert svm_predict(model, x) == pytest.approx(expected, rel=1e-10)


class TestGramTensor:
    def test_matches_scalar_eval(self, rng):
        X = rng.uniform(-1, 1, (3, 2))
        for spec in (KernelSpec.linear(), KernelSpec.polynomial(2),
                     KernelSpec.exponential(1.2), KernelSpec.se(0.7)):
            T = gram_tensor(spec, X, 4)
            for idx in np.ndindex(3, 3, 3, 3):
                pts = [X[i] for i in idx]
                assert T[idx] == pytest.approx(kernel_eval(spec, pts),
                                               rel=1e-11, abs=1e-13)


class TestProjection:
    def test_feasibility(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 10))
            v = rng.normal(size=n) * rng.uniform(0.1, 10)
            box = float(rng.uniform(0.1, 2))
            out = project_box_sumzero(v, np.full(n, -box), np.full(n, box))
            assert abs(out.sum()) < 1e-12
            assert np.all(out >= -box - 1e-15)
            assert np.all(out <= box + 1e-15)

    def test_is_euclidean_projection(self, rng):
        # brute-force check against a fine search over the shift parameter
        v = rng.normal(size=5)
        lo = np.full(5, -0.7)
        hi = np.full(5, 0.7)
        out = project_box_sumzero(v, lo, hi)
        # any feasible point must be at least as far from v
        for _ in range(200):
            cand = rng.uniform(-0.7, 0.7, 5)
            cand -= cand.sum() / 5
            if np.all(cand >= -0.7) and np.all(cand <= 0.7):
                assert np.linalg.norm(v - out) <= np.linalg.norm(v - cand) + 1e-9


class TestLooSelect:
    def test_singleton_grids(self, rng):
        data = LabeledDataset(X=rng.uniform(0, 1, (5, 2)), y=rng.normal(size=5))
        C, s = loo_mse_select(data, KernelSpec.se(1.0), [3.0], [0.25])
        assert (C, s) == (3.0, 0.25)

    def test_training_count(self, rng):
        data = LabeledDataset(X=rng.uniform(0, 1, (3, 2)), y=rng.normal(size=3))
        details = {}
        loo_mse_select(data, KernelSpec.se(1.0), [1.0, 10.0], [0.1, 0.3, 0.9],
                       details=details)
        assert details["trainings"] == 3 * 6

    def test_recovers_generating_scale(self):
        # noiseless draw from a known covariance: the selected scale lands
        # within one grid step of the truth
        r = np.random.default_rng(11)
        X = r.uniform(0, 1, (30, 2))
        K = gram(KernelSpec.se(0.08), X, 1e-10)
        y = np.linalg.cholesky(K) @ r.normal(size=30)
        data = LabeledDataset(X=X, y=y)
        grid = [0.02, 0.08, 0.32, 1.28]
        C, s = loo_mse_select(data, KernelSpec.se(1.0), [1.0, 10.0, 100.0],
                              grid, epsilon=0.01)
        assert s in (0.02, 0.08, 0.32)

    def test_empty_grid_rejected(self, rng):
        data = LabeledDataset(X=rng.uniform(0, 1, (4, 2)), y=rng.normal(size=4))
        with pytest.raises(ValueError):
            loo_mse_select(data, KernelSpec.se(1.0), [], [0.1])
        with pytest.raises(ValueError):
            loo_mse_select(data, KernelSpec.se(1.0), [1.0], [])

    def test_degenerate_data_rejected(self):
        data = LabeledDataset(X=np.ones((4, 2)), y=np.arange(4.0))
        with pytest.raises(ValueError, match="degenerate"):
            loo_mse_select(data, KernelSpec.se(1.0), [1.0], [0.1])

    def test_tie_breaks_towards_smaller_scale_then_budget(self):
        # constant targets with a wide tube: every grid point has zero error
        data = LabeledDataset(X=np.array([[0.0], [0.5], [1.0]]),
                              y=np.zeros(3))
        C, s = loo_mse_select(data, KernelSpec.se(1.0), [5.0, 1.0], [0.9, 0.2],
                              epsilon=0.5)
        assert (C, s) == (1.0, 0.2)
