import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose
from scipy.special import ndtr

from sparch import lattice
from sparch.estimate import (
    ConvergenceError,
    HessianError,
    OptimizerConfig,
    RankDeficiencyError,
    design_matrix,
    fit_sarsparch,
    fit_sparch,
    numerical_gradient,
    numerical_hessian,
    selection_path,
    stepwise_bic,
    update_model,
)
from sparch.likelihood import Parameters, loglik_sarsparch, loglik_sparch
from sparch.simulate import SimulationSpec, simulate, spawn_seeds
from sparch.weights import WeightsMatrix


@pytest.fixture(scope="module")
def W10():
    return lattice(10, 10, "queen", standardize=True)


@pytest.fixture(scope="module")
def esparch_fit(W10):
    f = simulate(SimulationSpec(100, alpha=1.0, rho=0.5, family="esparch", seed=21), W10)
    return fit_sparch(f.y, W10, "esparch")


@pytest.fixture(scope="module")
def regression_data():
    """spARCH errors around a linear mean with one relevant and one noise covariate."""
    W = lattice(8, 8, "queen", standardize=True)
    f = simulate(SimulationSpec(64, alpha=1.0, rho=0.3, seed=4), W)
    rng = np.random.default_rng(4)
    x1, x2, x3 = rng.standard_normal((3, 64))
    y = 0.5 + 1.5 * x1 + f.y
    return y, {"x1": x1, "x2": x2, "x3": x3}, W


class TestNumericalDerivatives:
    def test_quadratic(self):
        Q = np.array([[3.0, 0.5, 0.1], [0.5, 2.0, -0.3], [0.1, -0.3, 1.0]])
        H = numerical_hessian(lambda t: -0.5 * t @ Q @ t, np.array([0.3, -1.2, 2.0]))
        assert_allclose(H, -Q, atol=1e-6)
        assert_allclose(H, H.T, atol=0)

    def test_normal_variance(self):
        n, ss, s = 10, 12.0, 1.3

        def ll(t):
            return -0.5 * n * np.log(2 * np.pi * t[0]) - ss / (2 * t[0])

        H = numerical_hessian(ll, np.array([s]))
        assert H[0, 0] == pytest.approx(n / (2 * s**2) - ss / s**3, abs=1e-4)

    def test_step_halving_near_boundary(self):
        # finite only for t < 1.00003: the default step 1e-4 probes outside twice
        def f(t):
            return -np.sum(t**2) if t[0] < 1.00003 else np.nan

        H = numerical_hessian(f, np.array([1.0, 0.5]))
        assert_allclose(H, -2 * np.eye(2), atol=1e-4)

    def test_step_halving_exhausted(self):
        def f(t):
            return 0.0 if t[0] == 1.0 else -np.inf

        with pytest.raises(HessianError, match="halvings"):
            numerical_hessian(f, np.array([1.0]))

    def test_non_finite_at_point(self):
        with pytest.raises(HessianError):
            numerical_hessian(lambda t: np.nan, np.zeros(2))

    def test_gradient(self):
        g = numerical_gradient(lambda t: np.sin(t[0]) * t[1], np.array([0.4, 2.0]))
        assert_allclose(g, [np.cos(0.4) * 2.0, np.sin(0.4)], rtol=1e-7)


class TestDesign:
    def test_intercept_first(self):
        X, labels = design_matrix({"a": [1, 2, 3], "b": [0, 1, 0]}, ["b"])
        assert labels == ["(Intercept)", "b"]
        assert_allclose(X, [[1, 0], [1, 1], [1, 0]])

    def test_intercept_only(self):
        X, labels = design_matrix({}, [], n=4)
        assert labels == ["(Intercept)"]
        assert X.shape == (4, 1)

    def test_intercept_only_needs_n(self):
        with pytest.raises(ValueError):
            design_matrix({}, [])


class TestFitSparch:
    def test_identities(self, esparch_fit):
        fit = esparch_fit
        assert fit.k == 2
        assert fit.aic == -2 * fit.loglik + 2 * fit.k
        assert fit.bic == -2 * fit.loglik + fit.k * np.log(fit.n)
        ok = np.isfinite(fit.std_errors)
        assert_allclose(fit.t_values[ok], fit.estimates[ok] / fit.std_errors[ok], rtol=0)
        assert_allclose(fit.p_values[ok], 2 * ndtr(-np.abs(fit.t_values[ok])), rtol=0)
        assert np.all((fit.p_values[ok] >= 0) & (fit.p_values[ok] <= 1))

    def test_loglik_reevaluates(self, esparch_fit, W10):
        fit = esparch_fit
        ll = loglik_sparch(fit.y, fit.params(), W10, "esparch")
        assert ll == pytest.approx(fit.loglik, abs=1e-10)

    def test_stationary(self, esparch_fit):
        c = esparch_fit.convergence
        assert c["converged"] and c["stationary"]
        assert c["gradient_norm"] < 1e-4 * (1 + abs(esparch_fit.loglik))
        assert c["hessian_positive_definite"]

    def test_multistart_agreement(self, esparch_fit):
        lls = esparch_fit.convergence["start_logliks"]
        assert len(lls) == 3
        assert max(lls) - min(lls) < 1e-6

    def test_b_fixed_and_hidden(self, esparch_fit):
        assert esparch_fit["b"] == 2.0
        assert np.isnan(esparch_fit.std_errors[esparch_fit.names.index("b")])
        assert [lab for _, lab in esparch_fit.labels()] == ["alpha", "rho"]

    def test_residual_quantities(self, esparch_fit):
        fit = esparch_fit
        assert_allclose(fit.residuals, fit.y)
        assert_allclose(fit.std_residuals, fit.y / np.sqrt(fit.h))
        assert fit.moran_residuals.null_mean == pytest.approx(-1 / 99)

    def test_permutation_invariance(self, esparch_fit, W10):
        p = np.random.default_rng(0).permutation(100)
        fit = fit_sparch(esparch_fit.y[p], W10.permute(p), "esparch")
        assert_allclose(fit.estimates, esparch_fit.estimates, atol=1e-8)

    def test_white_noise(self, W10):
        f = simulate(SimulationSpec(100, alpha=2.0, family="white_noise", seed=8), W10)
        fit = fit_sparch(f.y, W10)
        assert fit["rho"] < 0.2
        assert abs(fit["alpha"] - np.mean(f.y**2)) < 3 * fit.std_errors[0]

    def test_boundary_flagged(self, W10):
        # pick a white-noise field whose estimate sits at rho = 0
        for s in spawn_seeds(2, 20):
            f = simulate(SimulationSpec(100, alpha=1.0, family="white_noise", seed=int(s)), W10)
            fit = fit_sparch(f.y, W10)
            if fit.convergence["boundary"]["rho"]:
                break
        else:
            pytest.fail("no boundary estimate among 20 white-noise fields")
        assert fit["rho"] == 0.0
        assert np.isnan(fit.std_errors[1]) and np.isnan(fit.p_values[1])
        assert fit["alpha"] == pytest.approx(np.mean(f.y**2), rel=1e-6)
        assert np.isfinite(fit.std_errors[0])

    def test_fixed_parameter(self, esparch_fit, W10):
        fit = fit_sparch(esparch_fit.y, W10, "esparch", OptimizerConfig(fixed={"rho": 0.25}))
        assert fit["rho"] == 0.25
        assert fit.k == 1
        assert np.isnan(fit.std_errors[1])

    def test_free_b_identifies_product_only(self, esparch_fit, W10):
        fit = fit_sparch(esparch_fit.y, W10, "esparch", OptimizerConfig(free_b=True))
        # the likelihood depends on rho and b only through rho * b
        assert fit["rho"] * fit["b"] == pytest.approx(2 * esparch_fit["rho"], rel=1e-4)
        assert fit.loglik == pytest.approx(esparch_fit.loglik, abs=1e-6)
        assert "b" in [lab for _, lab in fit.labels()]

    def test_non_convergence(self, esparch_fit, W10):
        cfg = OptimizerConfig(max_iterations=1, n_starts=1, polish=False)
        with pytest.raises(ConvergenceError) as info:
            fit_sparch(esparch_fit.y, W10, "esparch", cfg)
        assert info.value.fit is not None
        assert not info.value.fit.convergence["converged"]

    def test_too_few_observations(self):
        with pytest.raises(ValueError):
            fit_sparch(np.ones(5), lattice(1, 5))

    def test_unknown_family(self, W10):
        with pytest.raises(ValueError):
            fit_sparch(np.ones(100), W10, "complex")

    def test_to_dict_is_json(self, esparch_fit):
        import json

        d = json.loads(json.dumps(esparch_fit.to_dict()))
        assert d["model"] == "spARCH"
        assert [c["name"] for c in d["coefficients"]] == ["alpha", "rho"]


class TestFitSAR:
    def test_ols_with_lambda_and_rho_fixed(self, regression_data):
        y, cols, W = regression_data
        X, labels = design_matrix(cols, ["x1", "x2"])
        cfg = OptimizerConfig(fixed={"lambda": 0.0, "rho": 0.0})
        fit = fit_sarsparch(y, X, W, W, config=cfg, xnames=labels)
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        assert_allclose([fit[nm] for nm in labels], beta, atol=1e-6)
        assert fit["alpha"] == pytest.approx(np.mean((y - X @ beta) ** 2), rel=1e-6)

    def test_nested_null(self):
        B = lattice(10, 10, standardize=True)
        # oriented W: untruncated Gaussian errors
        W = WeightsMatrix(sp.tril(lattice(10, 10, "queen").matrix, k=-1))
        f = simulate(SimulationSpec(100, alpha=1.0, rho=0.3, seed=6), W)
        x = np.random.default_rng(6).standard_normal(100)
        X = np.column_stack([np.ones(100), x])
        fit = fit_sarsparch(f.y, X, B, W, xnames=["(Intercept)", "x"])
        for nm in ("lambda", "(Intercept)", "x"):
            i = fit.names.index(nm)
            assert abs(fit.estimates[i]) < 3 * fit.std_errors[i]
        assert fit.loglik == pytest.approx(
            loglik_sarsparch(f.y, X, fit.params(), B, W), abs=1e-10)

    def test_labels(self, regression_data):
        y, cols, W = regression_data
        X, labels = design_matrix(cols, ["x1"])
        fit = fit_sarsparch(y, X, W, W, xnames=labels)
        assert [lab for _, lab in fit.labels()] == [
            "alpha (spARCH)", "rho (spARCH)", "lambda (SAR)", "(Intercept)", "x1"]

    def test_rank_deficient(self, regression_data):
        y, cols, W = regression_data
        X = np.column_stack([np.ones(64), cols["x1"], 2 * cols["x1"]])
        with pytest.raises(RankDeficiencyError):
            fit_sarsparch(y, X, W, W)


@pytest.fixture(scope="module")
def base(regression_data):
    y, cols, W = regression_data
    X, labels = design_matrix(cols, ["x2"])
    return fit_sparch(y, W, X=X, xnames=labels)


class TestUpdate:
    def test_add_then_drop(self, base, regression_data):
        _, cols, _ = regression_data
        bigger = update_model(base, add=["x3"], data=cols)
        back = update_model(bigger, drop=["x3"])
        assert back.names == base.names
        assert_allclose(back.estimates, base.estimates, atol=1e-8)

    def test_relevant_covariate_lowers_aic(self, base, regression_data):
        _, cols, _ = regression_data
        bigger = update_model(base, add=["x1"], data=cols)
        assert bigger.aic < base.aic
        assert bigger["x1"] == pytest.approx(1.5, abs=0.3)

    def test_duplicate_column(self, base, regression_data):
        _, cols, _ = regression_data
        with pytest.raises(RankDeficiencyError):
            update_model(base, add=["copy"], data={"copy": cols["x2"].copy()})

    def test_unknown_column(self, base):
        with pytest.raises(KeyError):
            update_model(base, add=["nope"])
        with pytest.raises(KeyError):
            update_model(base, drop=["x3"])


class TestStepwise:
    def test_selects_relevant(self, regression_data):
        y, cols, W = regression_data
        X = np.column_stack([cols[c] for c in ("x1", "x2", "x3")])
        fit = stepwise_bic(y, X, None, W, names=["x1", "x2", "x3"])
        assert "x1" in fit.xnames
        bics = [t["bic"] for t in selection_path(fit)]
        assert all(b1 <= b0 for b0, b1 in zip(bics, bics[1:]))
        assert bics[-1] == fit.bic

    def test_empty_selection(self, regression_data):
        y, cols, W = regression_data
        noise = y - 0.5 - 1.5 * cols["x1"]
        X = np.column_stack([cols["x2"], cols["x3"]])
        fit = stepwise_bic(noise, X, None, W, names=["x2", "x3"])
        assert fit.xnames == ("(Intercept)",)
        assert selection_path(fit)[-1]["formula"] == "y ~ 1"

    def test_forward_matches_backward_here(self, regression_data):
        y, cols, W = regression_data
        X = np.column_stack([cols[c] for c in ("x1", "x2", "x3")])
        a = stepwise_bic(y, X, None, W, names=["x1", "x2", "x3"], start="empty")
        b = stepwise_bic(y, X, None, W, names=["x1", "x2", "x3"])
        assert a.xnames == b.xnames
        assert a.bic == pytest.approx(b.bic, abs=1e-6)

    @pytest.mark.slow
    def test_monte_carlo_selection(self):
        W = lattice(7, 7, "queen", standardize=True)
        cfg = OptimizerConfig(n_starts=1)
        hits = 0
        for s in spawn_seeds(5, 100):
            f = simulate(SimulationSpec(49, alpha=1.0, rho=0.4, seed=int(s)), W)
            X = np.random.default_rng(int(s)).standard_normal((49, 6))
            y = X[:, 2] + f.y
            fit = stepwise_bic(y, X, None, W, config=cfg, start="empty")
            hits += "x3" in fit.xnames
        assert hits >= 95
