"""Simulation of spatial ARCH-type random fields.

All randomness flows through ``numpy.random.Generator(numpy.random.Philox(seed))``,
a counter-based 64-bit generator. A field is a pure function of its
specification, weighting matrix and seed.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import ndtr, ndtri

from . import _kernels
from .weights import WeightsMatrix, truncation_bound

log = logging.getLogger(__name__)

Family = Literal["sparch_gaussian", "esparch", "complex", "white_noise"]
FAMILIES = ("sparch_gaussian", "esparch", "complex", "white_noise")

# solved squares below this are treated as round-off, not as regularity violations
_NEG_TOL = 1e-12


class SimulationError(RuntimeError):
    """The linear system defining the field could not be solved."""

    def __init__(self, msg, seed=None):
        super().__init__(f"{msg} (seed={seed})" if seed is not None else msg)
        self.seed = seed


class RegularityError(SimulationError):
    """A solved squared observation is negative.

    Non-negativity of ``Y**2`` requires ``(I - A^2)^{-1}`` to be
    entrywise non-negative; errors must be truncated to keep it so.
    """


def new_seed() -> int:
    """A fresh 64-bit seed from the operating system."""
    return secrets.randbits(64)


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))


def spawn_seeds(seed: int, count: int) -> np.ndarray:
    """Independent 64-bit child seeds for Monte Carlo replications."""
    ss = np.random.SeedSequence(int(seed))
    return ss.generate_state(count, dtype=np.uint64)


@dataclass(frozen=True)
class SimulationSpec:
    """Parameters of a simulated field.

    Attributes
    ----------
    alpha : float
        Variance level, ``> 0``.
    rho : float
        Spatial ARCH coefficient, ``>= 0``.
    b : float
        Exponent of the E-spARCH log-link, ``> 0``.
    truncate : bool
        spARCH only. When False the errors are never truncated, which may
        produce a :class:`RegularityError` on non-triangular ``W``.
    truncation_power : {1, 2, None}
        Norm rule passed to :func:`sparch.weights.truncation_bound`; ``None``
        selects it from ``W``.
    """

    n: int
    alpha: float = 1.0
    rho: float = 0.5
    b: float = 2.0
    family: Family = "sparch_gaussian"
    seed: int | None = None
    truncate: bool = True
    truncation_power: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.rho >= 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.seed is not None and not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def with_seed(self) -> "SimulationSpec":
        """Return a copy whose seed is set, drawing one if missing."""
        if self.seed is not None:
            return self
        return replace(self, seed=new_seed())


@dataclass(frozen=True, eq=False)
class SimulatedField:
    """One realisation ``y = sqrt(h) * eps``.

    ``y2`` holds the solved squares before sign assignment. It equals
    ``y**2`` for the real families; in the complex family some entries are
    negative and the matching ``y`` are purely imaginary.
    """

    y: np.ndarray
    eps: np.ndarray
    h: np.ndarray
    y2: np.ndarray
    family: str
    seed: int | None
    truncation: float = np.inf

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.y)


def sample_truncated_normal(a: float, count: int, seed) -> np.ndarray:
    """Standard normal draws conditioned on ``(-a, a)`` by inverse-CDF transform.

    Exactly one uniform is consumed per draw whatever ``a`` is, so streams
    stay aligned across truncation levels. ``a = inf`` gives plain standard
    normal draws.
    """
    if not a > 0:
        raise ValueError(f"truncation bound must be > 0, got {a}")
    rng = make_rng(seed)
    # uniforms on the open interval (0, 1)
    u = (rng.integers(0, 2**53, size=count, dtype=np.int64) + 0.5) / 2.0**53
    if np.isinf(a):
        return ndtri(u)
    lo = ndtr(-a)
    width = 1.0 - 2.0 * lo
    # draw in the lower half and reflect, which keeps tail precision symmetric
    v = np.where(u < 0.5, u, 1.0 - u)
    x = ndtri(lo + v * width)
    x = np.where(u < 0.5, x, -x)
    lim = np.nextafter(a, 0.0)
    return np.clip(x, -lim, lim)


def truncated_normal_variance(a: float) -> float:
    """Variance of the standard normal restricted to ``(-a, a)``."""
    if np.isinf(a):
        return 1.0
    phi = np.exp(-0.5 * a * a) / np.sqrt(2 * np.pi)
    return float(1.0 - 2.0 * a * phi / (2.0 * ndtr(a) - 1.0))


def _solve_squares(W: WeightsMatrix, eps2, alpha, rho, seed, order=None):
    """Solve ``(I - rho diag(eps2) W) y2 = alpha eps2``."""
    if rho == 0 or W.nnz == 0:
        return alpha * eps2
    m = W.matrix
    if order is not None:
        return _kernels.oriented_squares(
            order, m.indptr, m.indices, m.data, eps2, float(alpha), float(rho)
        )
    A = sp.identity(W.n, format="csc") - rho * (sp.diags(eps2) @ m).tocsc()
    try:
        lu = splu(A.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SimulationError(f"I - A is singular: {exc}", seed) from exc
    y2 = lu.solve(alpha * eps2)
    if not np.all(np.isfinite(y2)):
        raise SimulationError("I - A is numerically singular", seed)
    return y2


def _draw_normal(spec, rng):
    return sample_truncated_normal(np.inf, spec.n, rng)


def _check(spec: SimulationSpec, W: WeightsMatrix, family):
    if spec.family != family:
        raise ValueError(f"spec.family is {spec.family!r}, expected {family!r}")
    if W is not None and W.n != spec.n:
        raise ValueError(f"spec.n={spec.n} but W has {W.n} locations")


def simulate_sparch(spec: SimulationSpec, W: WeightsMatrix, eps=None) -> SimulatedField:
    """spARCH field with ``h = alpha + rho W y**2``.

    Errors are standard normal when ``W`` is triangular after a permutation
    (the oriented case, solved recursively along the topological order) and
    truncated to ``(-a, a)`` with ``a = truncation_bound(W, rho)`` otherwise.
    The squares solve ``(I - rho diag(eps**2) W) y**2 = alpha eps**2``; then
    ``h = alpha + rho W y**2`` (so ``h = y**2 / eps**2`` wherever
    ``eps != 0``) and ``y = sqrt(h) eps``. Pass ``eps`` to bypass the random
    draw.
    """
    _check(spec, W, "sparch_gaussian")
    spec = spec.with_seed() if eps is None else spec
    tri, order = W.orientation
    a = np.inf
    if eps is None:
        if not tri and spec.truncate:
            a = truncation_bound(W, spec.rho, power=spec.truncation_power)
        eps = sample_truncated_normal(a, spec.n, make_rng(spec.seed))
    else:
        eps = np.asarray(eps, dtype=float)
    eps2 = eps * eps
    y2 = _solve_squares(W, eps2, spec.alpha, spec.rho, spec.seed, order if tri else None)
    if np.any(y2 < -_NEG_TOL):
        i = int(np.argmin(y2))
        raise RegularityError(
            f"solved y^2[{i}] = {y2[i]:.3g} < 0: (I - A^2)^-1 has negative entries; "
            "truncate the errors to restore the regularity condition",
            spec.seed,
        )
    y2c = np.maximum(y2, 0.0)
    h = spec.alpha + spec.rho * (W.matrix @ y2c)
    # equals sign(eps) * sqrt(y2) up to rounding, and is exact when rho = 0
    y = np.sqrt(h) * eps
    return SimulatedField(y, eps, h, y2, "sparch_gaussian", spec.seed, a)


def simulate_esparch(spec: SimulationSpec, W: WeightsMatrix, eps=None) -> SimulatedField:
    """E-spARCH field with ``ln h = alpha + rho * b * W ln|eps|``."""
    _check(spec, W, "esparch")
    if eps is None:
        spec = spec.with_seed()
        rng = make_rng(spec.seed)
        eps = _draw_normal(spec, rng)
        zero = eps == 0
        while np.any(zero):
            log.warning("redrawing %d zero error(s) for seed %s", zero.sum(), spec.seed)
            eps[zero] = sample_truncated_normal(np.inf, int(zero.sum()), rng)
            zero = eps == 0
    else:
        eps = np.asarray(eps, dtype=float)
        if np.any(eps == 0):
            raise ValueError("E-spARCH errors must be non-zero")
    logh = spec.alpha + spec.rho * spec.b * (W.matrix @ np.log(np.abs(eps)))
    h = np.exp(logh)
    y = np.sqrt(h) * eps
    return SimulatedField(y, eps, h, y * y, "esparch", spec.seed)


def simulate_complex(spec: SimulationSpec, W: WeightsMatrix, eps=None) -> SimulatedField:
    """spARCH field allowing negative ``h``; such locations are purely imaginary."""
    _check(spec, W, "complex")
    if eps is None:
        spec = spec.with_seed()
        eps = _draw_normal(spec, make_rng(spec.seed))
    else:
        eps = np.asarray(eps, dtype=float)
    eps2 = eps * eps
    y2 = _solve_squares(W, eps2, spec.alpha, spec.rho, spec.seed)
    h = spec.alpha + spec.rho * (W.matrix @ y2)
    y = np.sqrt(h.astype(complex)) * eps
    # every coordinate is either purely real or purely imaginary
    assert not np.any((y.real != 0) & (y.imag != 0))
    return SimulatedField(y, eps, h, y2, "complex", spec.seed)


def simulate_white_noise(spec: SimulationSpec, W: WeightsMatrix | None = None, eps=None):
    """Spatial white noise ``y = sqrt(alpha) * eps``."""
    _check(spec, W, "white_noise")
    if eps is None:
        spec = spec.with_seed()
        eps = _draw_normal(spec, make_rng(spec.seed))
    else:
        eps = np.asarray(eps, dtype=float)
    h = np.full(spec.n, float(spec.alpha))
    y = np.sqrt(spec.alpha) * eps
    return SimulatedField(y, eps, h, y * y, "white_noise", spec.seed)


_DISPATCH = {
    "sparch_gaussian": simulate_sparch,
    "esparch": simulate_esparch,
    "complex": simulate_complex,
    "white_noise": simulate_white_noise,
}


def simulate(spec: SimulationSpec, W: WeightsMatrix | None = None, eps=None) -> SimulatedField:
    """Simulate a field of ``spec.family``."""
    return _DISPATCH[spec.family](spec, W, eps=eps)
