"""Moran's I tests, information criteria and residual plot data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .weights import WeightsMatrix

Alternative = Literal["two_sided", "greater", "less"]
_ALTERNATIVES = ("two_sided", "greater", "less")


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class MoranTest:
    I: float
    null_mean: float
    null_variance: float
    z_score: float
    p_value: float
    alternative: str = "two_sided"

    def as_dict(self):
        return {
            "I": self.I,
            "null_mean": self.null_mean,
            "null_variance": self.null_variance,
            "z_score": self.z_score,
            "p_value": self.p_value,
            "alternative": self.alternative,
        }


def normalize_alternative(alt: str) -> str:
    alt = alt.replace("-", "_")
    if alt not in _ALTERNATIVES:
        raise ValueError(f"alternative must be one of {_ALTERNATIVES}, got {alt!r}")
    return alt


def moran_moments(W: WeightsMatrix):
    """Null mean and variance of Moran's I under the normality assumption."""
    n = W.n
    m = W.matrix
    s0 = m.data.sum()
    sym = m + m.T
    s1 = 0.5 * float(sym.multiply(sym).sum())
    rs = np.asarray(m.sum(axis=1)).ravel()
    cs = np.asarray(m.sum(axis=0)).ravel()
    s2 = float(np.sum((rs + cs) ** 2))
    ei = -1.0 / (n - 1)
    vi = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / (s0 * s0 * (n * n - 1.0)) - ei * ei
    return ei, vi


def _p_value(z, alternative):
    if alternative == "greater":
        return float(ndtr(-z))
    if alternative == "less":
        return float(ndtr(z))
    return float(2.0 * ndtr(-abs(z)))


def morans_i(z, W: WeightsMatrix, alternative: str = "two_sided") -> MoranTest:
    """Moran's I of ``z`` with an asymptotic normal test.

    ``I = (n / S0) * d'Wd / d'd`` with ``d = z - mean(z)``. The null variance
    uses the normality assumption.
    """
    alternative = normalize_alternative(alternative)
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if n != W.n:
        raise ValueError(f"z has length {n} but W has {W.n} locations")
    if n < 3:
        raise DegenerateInputError("Moran's I needs at least 3 observations")
    d = z - z.mean()
    dd = float(d @ d)
    if dd == 0 or np.ptp(z) == 0:
        raise DegenerateInputError("Moran's I is undefined for a constant vector")
    s0 = W.s0
    if s0 == 0:
        raise DegenerateInputError("weights matrix has no links")
    stat = n / s0 * float(d @ (W.matrix @ d)) / dd
    ei, vi = moran_moments(W)
    zs = (stat - ei) / np.sqrt(vi)
    return MoranTest(stat, ei, vi, float(zs), _p_value(zs, alternative), alternative)


def morans_i_batch(Z, W: WeightsMatrix) -> np.ndarray:
    """Moran's I for every row of ``Z`` (replications x locations)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    D = Z - Z.mean(axis=1, keepdims=True)
    m = W.matrix
    num = _kernels.quadforms(m.indptr, m.indices, m.data, np.ascontiguousarray(D))
    den = np.einsum("ij,ij->i", D, D)
    return Z.shape[1] / W.s0 * num / den


def information_criteria(loglik: float, k: int, n: int):
    """``(AIC, BIC)`` with ``AIC = -2 l + 2k`` and ``BIC = -2 l + k ln n``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not n > k:
        raise ValueError("n must exceed k")
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * np.log(n)


@dataclass(frozen=True)
class ScatterData:
    x: np.ndarray
    lag: np.ndarray
    intercept: float
    slope: float

    def rows(self):
        return list(zip(self.x.tolist(), self.lag.tolist()))


def moran_scatter_data(z, W: WeightsMatrix) -> ScatterData:
    """Values against their spatial lags ``W z`` with the least-squares line.

    For row-standardized ``W`` without isolated locations the slope equals
    Moran's I.
    """
    z = np.asarray(z, dtype=float)
    lag = W.matrix @ z
    dz = z - z.mean()
    ss = float(dz @ dz)
    if ss == 0:
        slope = np.nan
        intercept = np.nan
    else:
        slope = float(dz @ (lag - lag.mean())) / ss
        intercept = float(lag.mean() - slope * z.mean())
    return ScatterData(z, np.asarray(lag), intercept, slope)


@dataclass(frozen=True)
class QQData:
    theoretical: np.ndarray
    sample: np.ndarray
    intercept: float
    slope: float

    def rows(self):
        return list(zip(self.theoretical.tolist(), self.sample.tolist()))


def qq_data(z, standardize: bool = False) -> QQData:
    """Normal Q-Q points at plotting positions ``(i - 0.5) / n``.

    The reference line passes through the first and third quartiles of the
    sample and theoretical points.
    Pass ``standardize=True`` to centre and scale ``z`` first.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise DegenerateInputError("Q-Q data needs at least 2 values")
    sd = z.std(ddof=1)
    if sd == 0:
        raise DegenerateInputError("zero sample variance")
    if standardize:
        z = (z - z.mean()) / sd
    sample = np.sort(z)
    theo = ndtri((np.arange(1, n + 1) - 0.5) / n)
    # same interpolation on both axes, so exact quantiles give the identity line
    q1, q3 = np.quantile(sample, [0.25, 0.75])
    t1, t3 = np.quantile(theo, [0.25, 0.75])
    slope = (q3 - q1) / (t3 - t1)
    return QQData(theo, sample, float(q1 - slope * t1), float(slope))


def render_svg(x, y, xlabel="", ylabel="", line=None, size=360) -> str:
    """Minimal static scatter plot as SVG text."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pad = 40
    lo_x, hi_x = float(np.min(x)), float(np.max(x))
    lo_y, hi_y = float(np.min(y)), float(np.max(y))
    span_x = hi_x - lo_x or 1.0
    span_y = hi_y - lo_y or 1.0

    def px(v):
        return pad + (v - lo_x) / span_x * (size - 2 * pad)

    def py(v):
        return size - pad - (v - lo_y) / span_y * (size - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" '
        'fill="none" stroke="#888"/>',
    ]
    for a, b in zip(x, y):
        out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2" fill="#225"/>')
    if line is not None and np.all(np.isfinite(line)):
        c, s = line
        out.append(
            f'<line x1="{px(lo_x):.2f}" y1="{py(c + s * lo_x):.2f}" '
            f'x2="{px(hi_x):.2f}" y2="{py(c + s * hi_x):.2f}" stroke="#c22"/>'
        )
    out.append(f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="12" y="{size / 2}" transform="rotate(-90 12 {size / 2})" '
        f'text-anchor="middle">{ylabel}</text>'
    )
    out.append("</svg>")
    return "\n".join(out)
