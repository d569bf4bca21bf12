"""Quasi-maximum-likelihood fitting of spARCH, E-spARCH and SARspARCH models."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from . import diagnostics
from .likelihood import (
    LIKELIHOOD_FAMILIES,
    Parameters,
    h_esparch,
    h_sparch,
    loglik_sarsparch,
    sar_residuals,
)
from .weights import WeightsMatrix

log = logging.getLogger(__name__)

__all__ = [
    "OptimizerConfig",
    "FitResult",
    "fit_sparch",
    "fit_sarsparch",
    "numerical_hessian",
    "numerical_gradient",
    "stepwise_bic",
    "update_model",
    "design_matrix",
    "ConvergenceError",
    "RankDeficiencyError",
    "HessianError",
]

_PENALTY = 1e20


class ConvergenceError(RuntimeError):
    """No start converged. ``fit`` holds the best point found, with diagnostics."""

    def __init__(self, msg, fit=None):
        super().__init__(msg)
        self.fit = fit


class RankDeficiencyError(ValueError):
    pass


class HessianError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer settings and parameter constraints.

    ``fixed`` pins parameters by name (``alpha``, ``rho``, ``b``, ``lambda``
    or a column name) at the given value. ``b`` is held at ``b`` unless
    ``free_b`` is set.
    """

    max_iterations: int = 500
    tol: float = 1e-8
    n_starts: int = 3
    rho_starts: tuple = (0.1, 0.25, 0.5)
    alpha_min: float = 1e-8
    rho_max: float | None = None
    b: float = 2.0
    free_b: bool = False
    b_min: float = 1e-3
    lam_bounds: tuple | None = None
    fixed: Mapping[str, float] = field(default_factory=dict)
    polish: bool = True

    def __post_init__(self):
        if not (self.tol > 0 and self.max_iterations > 0 and self.n_starts > 0):
            raise ValueError("tolerances and iteration counts must be positive")


def design_matrix(columns: Mapping[str, Sequence[float]], names=None, intercept=True, n=None):
    """Stack named columns into ``(X, labels)``, optionally with an intercept first.

    ``n`` is needed only for an intercept-only design with no columns.
    """
    names = list(columns) if names is None else list(names)
    cols, labels = [], []
    if names:
        n = len(columns[names[0]])
    if intercept:
        if n is None:
            raise ValueError("cannot infer n for an intercept-only design")
        cols.append(np.ones(n))
        labels.append("(Intercept)")
    for name in names:
        cols.append(np.asarray(columns[name], dtype=float))
        labels.append(name)
    X = np.column_stack(cols) if cols else np.empty((n or 0, 0))
    return X, labels


def _check_rank(X, labels):
    if X is None or X.shape[1] == 0:
        return
    r = np.linalg.matrix_rank(X)
    if r < X.shape[1]:
        raise RankDeficiencyError(
            f"design matrix has rank {r} < {X.shape[1]} columns {list(labels)}"
        )


def numerical_gradient(f, x, steps=None):
    x = np.asarray(x, dtype=float)
    h = _steps(x) if steps is None else np.asarray(steps, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2 * h[i])
    return g


def _steps(x):
    return np.maximum(1e-4 * np.abs(x), 1e-5)


def numerical_hessian(objective: Callable, point, step=None, max_halvings: int = 5):
    """Central-difference Hessian, symmetrized.

    The default step for coordinate ``i`` is ``max(1e-4 |x_i|, 1e-5)``. When a
    probe returns a non-finite value, the steps of the coordinates involved
    are halved and the matrix recomputed; after ``max_halvings`` halvings a
    :class:`HessianError` is raised.
    """
    x = np.asarray(point, dtype=float)
    k = x.shape[0]
    h = _steps(x) if step is None else np.broadcast_to(np.asarray(step, float), (k,)).copy()
    f0 = objective(x)
    if not np.isfinite(f0):
        raise HessianError("objective is not finite at the evaluation point")
    halvings = np.zeros(k, dtype=int)
    while True:
        bad = None
        H = np.empty((k, k))
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = h[i]
            fp, fm = objective(x + ei), objective(x - ei)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                bad = (i,)
                break
            H[i, i] = (fp - 2 * f0 + fm) / h[i] ** 2
            for j in range(i):
                ej = np.zeros(k)
                ej[j] = h[j]
                vals = (
                    objective(x + ei + ej),
                    objective(x + ei - ej),
                    objective(x - ei + ej),
                    objective(x - ei - ej),
                )
                if not all(np.isfinite(v) for v in vals):
                    bad = (i, j)
                    break
                H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h[i] * h[j])
            if bad:
                break
        if bad is None:
            return 0.5 * (H + H.T)
        for i in bad:
            if halvings[i] >= max_halvings:
                raise HessianError(
                    f"objective not finite near the point after {max_halvings} step halvings "
                    f"(coordinate {i})"
                )
            halvings[i] += 1
            h[i] *= 0.5
        log.debug("hessian probe failed for %s; halving steps to %s", bad, h)


# ---------------------------------------------------------------------------
# model layout


@dataclass
class _Model:
    y: np.ndarray
    X: np.ndarray | None
    xnames: list
    B: WeightsMatrix | None
    W: WeightsMatrix
    family: str
    config: OptimizerConfig

    def __post_init__(self):
        names = ["alpha", "rho", "b"]
        if self.B is not None:
            names.append("lambda")
        names += list(self.xnames)
        self.names = names
        fixed = dict(self.config.fixed)
        if self.family != "esparch":
            fixed["b"] = self.config.b
        elif not self.config.free_b:
            fixed.setdefault("b", self.config.b)
        unknown = set(fixed) - set(names)
        if unknown:
            raise ValueError(f"cannot fix unknown parameters {sorted(unknown)}")
        self.fixed = fixed
        self.free = [i for i, nm in enumerate(names) if nm not in fixed]
        self.bounds = [self._bound(nm) for nm in names]

    def _bound(self, name):
        c = self.config
        if name == "alpha":
            return (c.alpha_min, None)
        if name == "rho":
            return (0.0, c.rho_max)
        if name == "b":
            return (c.b_min, None)
        if name == "lambda":
            return c.lam_bounds if c.lam_bounds is not None else lambda_bounds(self.B)
        return (None, None)

    def full(self, theta_free):
        v = np.empty(len(self.names))
        for i, nm in enumerate(self.names):
            if nm in self.fixed:
                v[i] = self.fixed[nm]
        v[self.free] = theta_free
        return v

    def params(self, v) -> Parameters:
        off = 4 if self.B is not None else 3
        lam = v[3] if self.B is not None else 0.0
        return Parameters(alpha=v[0], rho=v[1], b=v[2], lam=lam, beta=v[off:])

    def loglik_full(self, v) -> float:
        return loglik_sarsparch(self.y, self.X, self.params(v), self.B, self.W, self.family)

    def loglik(self, theta_free) -> float:
        return self.loglik_full(self.full(theta_free))

    def in_bounds(self, theta_free):
        for t, i in zip(theta_free, self.free):
            lo, hi = self.bounds[i]
            if (lo is not None and t < lo) or (hi is not None and t > hi):
                return False
        return True

    def bounded_loglik(self, theta_free):
        if not self.in_bounds(theta_free):
            return -np.inf
        return self.loglik(theta_free)


def lambda_bounds(B: WeightsMatrix | None):
    """Feasible interval for the SAR coefficient.

    ``(-0.999, 0.999)`` for row-standardized ``B``; otherwise the reciprocals
    of the extreme real eigenvalues, shrunk by the same factor.
    """
    if B is None or B.row_standardized:
        return (-0.999, 0.999)
    ev = np.linalg.eigvals(B.toarray()).real
    lo, hi = ev.min(), ev.max()
    return (0.999 / lo if lo < 0 else -np.inf, 0.999 / hi if hi > 0 else np.inf)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a QML fit.

    ``std_errors`` are ``nan`` for fixed parameters, for parameters on a
    bound and whenever the negative Hessian is not positive definite.
    """

    family: str
    names: tuple
    estimates: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    free: tuple
    loglik: float
    aic: float
    bic: float
    k: int
    n: int
    fitted: np.ndarray
    residuals: np.ndarray
    std_residuals: np.ndarray
    h: np.ndarray
    moran_residuals: diagnostics.MoranTest | None
    moran_squared: diagnostics.MoranTest | None
    convergence: dict
    y: np.ndarray = field(repr=False)
    X: np.ndarray | None = field(repr=False)
    xnames: tuple = ()
    B: WeightsMatrix | None = field(default=None, repr=False)
    W: WeightsMatrix | None = field(default=None, repr=False)
    config: OptimizerConfig | None = field(default=None, repr=False)
    pool: Mapping[str, np.ndarray] = field(default_factory=dict, repr=False)
    intercept: bool = False
    trace: tuple = ()

    @property
    def sar(self) -> bool:
        return self.B is not None

    def __getitem__(self, name) -> float:
        return float(self.estimates[self.names.index(name)])

    def params(self) -> Parameters:
        v = self.estimates
        off = 4 if self.sar else 3
        return Parameters(v[0], v[1], v[2], v[3] if self.sar else 0.0, v[off:])

    def labels(self):
        """Display labels in reported order (b omitted unless estimated)."""
        out = []
        for i, nm in enumerate(self.names):
            if nm == "b" and i not in self.free:
                continue
            if self.sar and nm in ("alpha", "rho", "b"):
                out.append((i, f"{nm} (spARCH)"))
            elif nm == "lambda":
                out.append((i, "lambda (SAR)"))
            else:
                out.append((i, nm))
        return out

    def coef_table(self):
        return [
            (label, self.estimates[i], self.std_errors[i], self.t_values[i], self.p_values[i])
            for i, label in self.labels()
        ]

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "family": self.family,
            "model": "SARspARCH" if self.sar else "spARCH",
            "n": self.n,
            "k": self.k,
            "coefficients": [
                {
                    "name": self.names[i],
                    "label": label,
                    "estimate": float(self.estimates[i]),
                    "std_error": _json_float(self.std_errors[i]),
                    "t_value": _json_float(self.t_values[i]),
                    "p_value": _json_float(self.p_values[i]),
                    "free": i in self.free,
                }
                for i, label in self.labels()
            ],
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "fitted": arr(self.fitted),
            "residuals": arr(self.residuals),
            "std_residuals": arr(self.std_residuals),
            "h": arr(self.h),
            "moran_residuals": self.moran_residuals.as_dict() if self.moran_residuals else None,
            "moran_squared_residuals": self.moran_squared.as_dict() if self.moran_squared else None,
            "convergence": self.convergence,
            "trace": list(self.trace),
        }


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


# ---------------------------------------------------------------------------
# optimization


def _initial(model: _Model, rho0, start=None):
    if start is not None:
        v = np.asarray(start, dtype=float).copy()
        return v
    y, X = model.y, model.X
    v = np.zeros(len(model.names))
    beta = np.zeros(0)
    if X is not None and X.shape[1]:
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
    u = y - (X @ beta if beta.size else 0.0)
    b = model.fixed.get("b", model.config.b)
    if model.family == "esparch":
        # match the mean log volatility at rho0 for a row-standardized W
        c = rho0 * b
        m = np.mean(np.log(u * u + 1e-300)) + 1.2704
        alpha0 = (1 + 0.5 * c) * m - c * np.mean(np.log(np.abs(u) + 1e-300))
        alpha0 = max(alpha0, model.config.alpha_min)
    else:
        alpha0 = float(np.mean(u * u))
    v[0], v[1], v[2] = alpha0, rho0, b
    off = 3
    if model.B is not None:
        v[3] = 0.0
        off = 4
    v[off:] = beta
    for i, nm in enumerate(model.names):
        if nm in model.fixed:
            v[i] = model.fixed[nm]
    return v


def _clip(model, theta):
    out = np.array(theta, dtype=float)
    for j, i in enumerate(model.free):
        lo, hi = model.bounds[i]
        if lo is not None:
            out[j] = max(out[j], lo)
        if hi is not None:
            out[j] = min(out[j], hi)
    return out


def _at_bound(model, theta):
    flags = []
    for t, i in zip(theta, model.free):
        lo, hi = model.bounds[i]
        on = False
        if lo is not None and np.isfinite(lo):
            on |= t - lo <= 1e-7 * max(1.0, abs(lo))
        if hi is not None and np.isfinite(hi):
            on |= hi - t <= 1e-7 * max(1.0, abs(hi))
        flags.append(bool(on))
    return np.array(flags, dtype=bool)


def _optimize_once(model: _Model, theta0):
    cfg = model.config

    def negll(t):
        v = model.loglik(t)
        return -v if np.isfinite(v) else _PENALTY

    def grad(t):
        h = _steps(t)
        g = np.empty_like(t)
        for i in range(t.shape[0]):
            e = np.zeros_like(t)
            e[i] = h[i]
            lo, hi = model.bounds[model.free[i]]
            tp, tm = t + e, t - e
            if lo is not None and tm[i] < lo:
                g[i] = (negll(tp) - negll(t)) / h[i]
            elif hi is not None and tp[i] > hi:
                g[i] = (negll(t) - negll(tm)) / h[i]
            else:
                g[i] = (negll(tp) - negll(tm)) / (2 * h[i])
        return g

    bounds = [model.bounds[i] for i in model.free]
    f0 = negll(theta0)
    if f0 >= _PENALTY:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            negll,
            theta0,
            jac=grad,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.max_iterations, "ftol": cfg.tol * 1e-4, "gtol": cfg.tol},
        )
        method = "L-BFGS-B"
        if not res.success or res.fun >= _PENALTY:
            nm = optimize.minimize(
                negll,
                res.x if res.fun < f0 else theta0,
                method="Nelder-Mead",
                bounds=bounds,
                options={
                    "maxiter": cfg.max_iterations * len(theta0),
                    "xatol": cfg.tol,
                    "fatol": cfg.tol,
                },
            )
            if nm.fun <= res.fun:
                res, method = nm, "Nelder-Mead"
    theta = _clip(model, res.x)
    iters = int(getattr(res, "nit", 0))
    success = bool(res.success)
    return theta, -negll(theta), iters, success, method


def _newton_polish(model: _Model, theta, steps=8):
    """Guarded Newton steps on the interior coordinates.

    The Hessian is evaluated once at the starting point and reused; only the
    gradient is refreshed between steps.
    """
    inner = ~_at_bound(model, theta)
    if not inner.any():
        return theta, 0
    idx = np.flatnonzero(inner)
    base = theta.copy()

    def sub(t):
        full = base.copy()
        full[idx] = t
        return model.bounded_loglik(full)

    try:
        L = np.linalg.cholesky(-numerical_hessian(sub, theta[idx]))
    except (HessianError, np.linalg.LinAlgError):
        return theta, 0
    done = 0
    f0 = model.loglik(theta)
    for _ in range(steps):
        g = numerical_gradient(sub, theta[idx])
        if not np.all(np.isfinite(g)):
            break
        step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        moved = False
        while t > 1e-4:
            cand = theta.copy()
            cand[idx] = theta[idx] + t * step
            cand = _clip(model, cand)
            f1 = model.loglik(cand)
            if np.isfinite(f1) and f1 >= f0 - 1e-12 * max(1.0, abs(f0)):
                moved = f1 > f0 or np.max(np.abs(cand - theta)) > 0
                theta, f0 = cand, f1
                break
            t *= 0.5
        done += 1
        if not moved or np.max(np.abs(t * step)) < 1e-12 * (1 + np.max(np.abs(theta))):
            break
        if _at_bound(model, theta)[idx].any():
            break
    return theta, done


def _fit(y, X, xnames, B, W, family, config, start=None, pool=None, intercept=False):
    if family not in LIKELIHOOD_FAMILIES:
        raise ValueError(f"cannot fit family {family!r}; expected one of {LIKELIHOOD_FAMILIES}")
    config = config or OptimizerConfig()
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 10:
        raise ValueError(f"need at least 10 observations, got {n}")
    if W.n != n:
        raise ValueError(f"y has {n} observations but W has {W.n} locations")
    if B is not None and B.n != n:
        raise ValueError(f"y has {n} observations but B has {B.n} locations")
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != n:
            raise ValueError(f"X must be {n} x p, got shape {X.shape}")
        if X.shape[1] == 0:
            X = None
    xnames = list(xnames) if X is not None else []
    _check_rank(X, xnames)
    model = _Model(y, X, xnames, B, W, family, config)

    starts = []
    if start is not None:
        starts.append(_initial(model, None, start))
    for r0 in config.rho_starts[: config.n_starts]:
        r0 = model.fixed.get("rho", r0)
        v = _initial(model, r0)
        if not any(np.allclose(v, s) for s in starts):
            starts.append(v)

    runs = []
    for v0 in starts:
        theta0 = _clip(model, v0[model.free])
        out = _optimize_once(model, theta0)
        if out is not None:
            runs.append(out)
    if not runs:
        raise ConvergenceError("log-likelihood is not finite at any starting point")
    b = max(range(len(runs)), key=lambda i: runs[i][1])
    if config.polish:
        theta, k = _newton_polish(model, runs[b][0])
        runs[b] = (theta, model.loglik(theta), runs[b][2] + k) + runs[b][3:]
    theta, ll = runs[b][0], runs[b][1]
    return _assemble(model, theta, ll, runs, pool, intercept)


def _assemble(model: _Model, theta, ll, runs, pool, intercept):
    cfg = model.config
    n = model.y.shape[0]
    v = model.full(theta)
    names = model.names
    k = len(model.free)
    aic, bic = diagnostics.information_criteria(ll, k, n)

    boundary = _at_bound(model, theta)
    se = np.full(len(names), np.nan)
    inner = np.flatnonzero(~boundary)
    hess_pd = None
    grad_norm = np.nan
    if inner.size:

        def sub(t):
            full = theta.copy()
            full[inner] = t
            return model.bounded_loglik(full)

        try:
            H = numerical_hessian(sub, theta[inner])
            cov = np.linalg.inv(-H)
            d = np.diag(cov)
            hess_pd = bool(np.all(np.linalg.eigvalsh(-H) > 0))
            if hess_pd:
                se[np.asarray(model.free)[inner]] = np.sqrt(d)
        except (HessianError, np.linalg.LinAlgError):
            hess_pd = False
        g = numerical_gradient(sub, theta[inner])
        grad_norm = float(np.linalg.norm(g))
    else:
        grad_norm = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = np.where(np.isfinite(se), v / se, np.nan)
    pv = np.where(np.isfinite(tv), 2.0 * ndtr(-np.abs(tv)), np.nan)

    p = model.params(v)
    u = sar_residuals(model.y, model.X, p.lam, p.beta, model.B)
    fitted = model.y - u
    if model.family == "esparch":
        h = h_esparch(u, p.alpha, p.rho, p.b, model.W)
    else:
        h = h_sparch(u, p.alpha, p.rho, model.W)
    with np.errstate(invalid="ignore"):
        eps = u / np.sqrt(h)
    mr = ms = None
    try:
        mr = diagnostics.morans_i(eps, model.W)
        ms = diagnostics.morans_i(eps * eps, model.W)
    except diagnostics.DegenerateInputError:
        pass

    stationary = bool(grad_norm < 1e-4 * (1 + abs(ll)))
    converged = stationary or any(r[3] for r in runs)
    conv = {
        "converged": converged,
        "stationary": stationary,
        "iterations": int(sum(r[2] for r in runs)),
        "gradient_norm": grad_norm,
        "method": runs[[r[1] for r in runs].index(max(r[1] for r in runs))][4],
        "start_logliks": [float(r[1]) for r in runs],
        "boundary": {names[i]: bool(b) for i, b in zip(model.free, boundary)},
        "hessian_positive_definite": hess_pd,
    }
    fit = FitResult(
        family=model.family,
        names=tuple(names),
        estimates=v,
        std_errors=se,
        t_values=tv,
        p_values=pv,
        free=tuple(model.free),
        loglik=float(ll),
        aic=float(aic),
        bic=float(bic),
        k=k,
        n=n,
        fitted=fitted,
        residuals=u,
        std_residuals=eps,
        h=h,
        moran_residuals=mr,
        moran_squared=ms,
        convergence=conv,
        y=model.y,
        X=model.X,
        xnames=tuple(model.xnames),
        B=model.B,
        W=model.W,
        config=cfg,
        pool=dict(pool or {}),
        intercept=intercept,
    )
    if not converged:
        raise ConvergenceError(
            f"optimizer did not converge after {cfg.max_iterations} iterations x "
            f"{len(runs)} starts (gradient norm {grad_norm:.3g})",
            fit,
        )
    return fit


def fit_sparch(y, W: WeightsMatrix, family="sparch_gaussian", config=None, X=None,
               xnames=None, start=None) -> FitResult:
    """Fit a spARCH/E-spARCH model, optionally with a linear mean ``X beta``.

    Maximizes the Gaussian log-likelihood over ``alpha >= alpha_min``,
    ``rho >= 0`` (and ``b`` when freed). Standard errors come from the
    inverse of the negative central-difference Hessian at the optimum.
    """
    xnames = _names(X, xnames)
    return _fit(y, X, xnames, None, W, family, config, start=start,
                intercept="(Intercept)" in xnames)


def fit_sarsparch(y, X, B: WeightsMatrix, W: WeightsMatrix, family="sparch_gaussian",
                  config=None, xnames=None, start=None) -> FitResult:
    """Fit ``y = lambda B y + X beta + u`` with spARCH-type disturbances ``u``."""
    xnames = _names(X, xnames)
    return _fit(y, X, xnames, B, W, family, config, start=start,
                intercept="(Intercept)" in xnames)


def _names(X, xnames):
    if X is None:
        return []
    p = np.asarray(X).shape[1]
    if xnames is None:
        return [f"x{j + 1}" for j in range(p)]
    if len(xnames) != p:
        raise ValueError(f"{len(xnames)} names for {p} columns")
    return list(xnames)


# ---------------------------------------------------------------------------
# model selection


def _formula(cols, intercept):
    rhs = (["1"] if intercept else ["0"]) + list(cols)
    return "y ~ " + " + ".join(rhs)


def _refit(y, pool, cols, intercept, B, W, family, config, start=None):
    n = len(y)
    X, labels = design_matrix(pool, cols, intercept=intercept, n=n) if (cols or intercept) else (None, [])
    if X is not None and X.shape[1] == 0:
        X = None
    return _fit(y, X, labels, B, W, family, config, start=start, pool=pool,
                intercept=intercept)


def _warm_start(fit: FitResult, new_names):
    """Map previous estimates onto a new parameter layout; new coefficients start at 0."""
    old = dict(zip(fit.names, fit.estimates))
    return np.array([old.get(nm, 0.0) for nm in new_names])


def _layout(B, labels):
    return ["alpha", "rho", "b"] + (["lambda"] if B is not None else []) + list(labels)


def stepwise_bic(y, X_full, B, W, family="sparch_gaussian", config=None, names=None,
                 intercept=True, start="full") -> FitResult:
    """Bidirectional stepwise covariate selection minimizing BIC.

    Each step tries dropping every included covariate and adding every
    excluded one, taking the move with the lowest BIC; ties go to the
    earliest column. Fits that fail are recorded in the trace and skipped.
    The returned result carries the visited-model trace.
    """
    X_full = np.asarray(X_full, dtype=float) if X_full is not None else np.empty((len(y), 0))
    if X_full.ndim == 1:
        X_full = X_full[:, None]
    names = [f"x{j + 1}" for j in range(X_full.shape[1])] if names is None else list(names)
    pool = {nm: X_full[:, j] for j, nm in enumerate(names)}
    current = list(names) if start == "full" else []
    best = _refit(y, pool, current, intercept, B, W, family, config)
    trace = [{"step": 0, "action": "start", "formula": _formula(current, intercept),
              "bic": best.bic, "aic": best.aic}]
    step = 0
    while True:
        step += 1
        moves = [("-", c) for c in names if c in current] + [("+", c) for c in names if c not in current]
        cand_best = None
        for op, c in moves:
            cols = [x for x in current if x != c] if op == "-" else [x for x in names if x in current or x == c]
            if not cols and not intercept:
                continue
            labels = (["(Intercept)"] if intercept else []) + cols
            try:
                warm = _warm_start(best, _layout(B, labels))
                fit = _refit(y, pool, cols, intercept, B, W, family, config, start=warm)
            except (ConvergenceError, RankDeficiencyError, ValueError, np.linalg.LinAlgError) as exc:
                trace.append({"step": step, "action": f"{op} {c}", "formula": _formula(cols, intercept),
                              "bic": None, "aic": None, "error": str(exc)})
                continue
            if cand_best is None or fit.bic < cand_best[0].bic:
                cand_best = (fit, op, c, cols)
        if cand_best is None or not cand_best[0].bic < best.bic:
            break
        best, op, c, current = cand_best
        trace.append({"step": step, "action": f"{op} {c}", "formula": _formula(current, intercept),
                      "bic": best.bic, "aic": best.aic})
    return replace(best, trace=tuple(trace))


def selection_path(fit: FitResult):
    """Accepted steps of a stepwise trace (failed candidates excluded)."""
    return [t for t in fit.trace if t.get("bic") is not None and "error" not in t]


def update_model(fit: FitResult, add=(), drop=(), data=None) -> FitResult:
    """Refit with covariates added or dropped, warm-started from ``fit``.

    ``add`` holds column names found in the fit's covariate pool or in
    ``data`` (a mapping of name to column).
    """
    pool = dict(fit.pool)
    if not pool and fit.X is not None:
        pool = {nm: fit.X[:, j] for j, nm in enumerate(fit.xnames) if nm != "(Intercept)"}
    if data:
        pool.update({k: np.asarray(v, dtype=float) for k, v in data.items()})
    current = [nm for nm in fit.xnames if nm != "(Intercept)"]
    for c in drop:
        if c not in current:
            raise KeyError(f"cannot drop {c!r}: not in the model {current}")
    for c in add:
        if c not in pool:
            raise KeyError(f"cannot add {c!r}: unknown column")
        if c in current:
            raise ValueError(f"{c!r} is already in the model")
    cols = [c for c in current if c not in drop] + list(add)
    labels = (["(Intercept)"] if fit.intercept else []) + cols
    warm = _warm_start(fit, _layout(fit.B, labels))
    return _refit(fit.y, pool, cols, fit.intercept, fit.B, fit.W, fit.family, fit.config, start=warm)
