"""Volatility vectors, Jacobian log-determinants and log-likelihoods.

The observation density follows from the change of variables
``eps = y / sqrt(h(y))``::

    log f(y) = log|det J(y)| + sum_i log phi(y_i / sqrt(h_i))

with ``J_ij = d(y_j / sqrt(h_j)) / d y_i``.

For the spARCH model (``h = alpha + rho W y**2``)::

    log|det J| = log|det(diag(h / y**2) - rho W')| + sum log(y**2 / h**1.5)

For the E-spARCH model (``(I + rho b W / 2) log h = alpha + rho b W log|y|``)
the Jacobian factors as ``diag(1/y) S diag(y / sqrt(h))`` with
``S = (I + rho b W / 2)^{-1}``, hence::

    log|det J| = -log det(I + rho b W / 2) - sum log(h) / 2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .weights import WeightsMatrix

__all__ = [
    "Parameters",
    "SMatrix",
    "sparse_logdet",
    "h_sparch",
    "h_esparch",
    "logdet_jacobian_sparch",
    "logdet_jacobian_esparch",
    "loglik_sparch",
    "loglik_sarsparch",
    "LIKELIHOOD_FAMILIES",
]

LIKELIHOOD_FAMILIES = ("sparch_gaussian", "esparch")
DENSE_MAX = 64
# largest B whose eigenvalues are cached for the SAR log-determinant
EIGEN_MAX = 2000
_LOG_2PI = np.log(2.0 * np.pi)


class DomainError(ValueError):
    """Observations outside the domain of the transformation."""


@dataclass(frozen=True)
class Parameters:
    alpha: float
    rho: float = 0.0
    b: float = 2.0
    lam: float = 0.0
    beta: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(v) for v in np.ravel(self.beta)))


def _perm_parity(p) -> int:
    p = np.asarray(p)
    seen = np.zeros(p.shape[0], dtype=bool)
    cycles = 0
    for i in range(p.shape[0]):
        if not seen[i]:
            cycles += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = p[j]
    return -1 if (p.shape[0] - cycles) % 2 else 1


def _lu_slogdet(lu):
    d = lu.U.diagonal()
    if np.any(d == 0):
        return 0.0, -np.inf
    sign = _perm_parity(lu.perm_r) * _perm_parity(lu.perm_c) * np.prod(np.sign(d))
    return float(sign), float(np.sum(np.log(np.abs(d))))


def sparse_logdet(A):
    """Sign and log absolute determinant of a square matrix.

    Sparse LU with approximate minimum degree column ordering; dense
    ``slogdet`` for ``n <= 64``. A singular matrix gives ``(0.0, -inf)``.
    """
    n = A.shape[0]
    if n <= DENSE_MAX:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        sign, val = np.linalg.slogdet(dense)
        return float(sign), float(val)
    try:
        lu = splu(sp.csc_matrix(A), permc_spec="COLAMD")
    except RuntimeError:
        return 0.0, -np.inf
    return _lu_slogdet(lu)


def _diag_plus(W: WeightsMatrix, d, c, transpose=False):
    """``diag(d) + c W`` (or ``c W'``), dense when ``n <= DENSE_MAX``."""
    if W.n <= DENSE_MAX:
        M = c * (W.dense.T if transpose else W.dense)
        M.flat[:: W.n + 1] += d
        return M
    indptr, indices, w, diag = W.identity_pattern_t if transpose else W.identity_pattern
    data = c * w
    data[diag] += d
    return sp.csc_matrix((data, indices, indptr), shape=(W.n, W.n))


class SMatrix:
    """The operator ``S = (I + rho b W / 2)^{-1}`` held as a factorization.

    ``sign`` and ``logdet_inverse`` describe ``det(I + rho b W / 2)``.
    """

    def __init__(self, W: WeightsMatrix, rho: float, b: float):
        self.n = W.n
        M = _diag_plus(W, 1.0, 0.5 * rho * b)
        self._lu = None
        self._dense = None
        if W.n <= DENSE_MAX:
            self._dense = M
            sign, val = np.linalg.slogdet(self._dense)
            self.sign, self.logdet_inverse = float(sign), float(val)
        else:
            try:
                self._lu = splu(M, permc_spec="COLAMD")
                self.sign, self.logdet_inverse = _lu_slogdet(self._lu)
            except RuntimeError:
                self.sign, self.logdet_inverse = 0.0, -np.inf

    @property
    def positive(self) -> bool:
        return self.sign > 0

    def solve(self, rhs):
        """``S @ rhs``."""
        if self.sign == 0:
            raise np.linalg.LinAlgError("I + rho b W / 2 is singular")
        rhs = np.asarray(rhs, dtype=float)
        if self._dense is not None:
            return np.linalg.solve(self._dense, rhs)
        return self._lu.solve(rhs)

    def toarray(self):
        return self.solve(np.eye(self.n))


def _nonzero(y, what="y"):
    y = np.asarray(y, dtype=float)
    zero = np.flatnonzero(y == 0)
    if zero.size:
        raise DomainError(f"{what} must be non-zero; zero at indices {zero[:10].tolist()}")
    return y


def h_sparch(y, alpha, rho, W: WeightsMatrix):
    """``h = alpha + rho W y**2``. Entries may be negative for invalid parameters."""
    y = np.asarray(y, dtype=float)
    return alpha + rho * (W.matrix @ (y * y))


def _esparch_state(y, alpha, rho, b, W):
    y = _nonzero(y)
    S = SMatrix(W, rho, b)
    rhs = alpha + rho * b * (W.matrix @ np.log(np.abs(y)))
    if S.sign == 0:
        return y, None, S
    logh = S.solve(rhs)
    return y, logh, S


def h_esparch(y, alpha, rho, b, W: WeightsMatrix):
    """E-spARCH volatility from observations: ``ln h = S (alpha + rho b W ln|y|)``."""
    _, logh, _ = _esparch_state(y, alpha, rho, b, W)
    if logh is None:
        raise np.linalg.LinAlgError("I + rho b W / 2 is singular")
    return np.exp(logh)


def logdet_jacobian_sparch(y, alpha, rho, W: WeightsMatrix) -> float:
    y = _nonzero(y)
    h = h_sparch(y, alpha, rho, W)
    if np.any(h <= 0):
        return -np.inf
    y2 = y * y
    if rho == 0 or W.orientation[0]:
        # triangular after permutation: the determinant is the diagonal product
        return float(np.sum(np.log(h / y2)) + np.sum(np.log(y2) - 1.5 * np.log(h)))
    sign, val = sparse_logdet(_diag_plus(W, h / y2, -rho, transpose=True))
    if sign == 0:
        return -np.inf
    return val + float(np.sum(np.log(y2) - 1.5 * np.log(h)))


def logdet_jacobian_esparch(y, alpha, rho, b, W: WeightsMatrix) -> float:
    """``-log det(I + rho b W / 2) - sum(log h) / 2``.

    Returns ``-inf`` when ``det(I + rho b W / 2) <= 0``: the map from errors
    to observations is then not the one-to-one branch containing ``rho = 0``.
    """
    _, logh, S = _esparch_state(y, alpha, rho, b, W)
    if logh is None or not S.positive:
        return -np.inf
    return float(-S.logdet_inverse - 0.5 * np.sum(logh))


def _gauss_logpdf_sum(z):
    return float(-0.5 * (z.shape[0] * _LOG_2PI + np.dot(z, z)))


def loglik_sparch(y, params: Parameters, W: WeightsMatrix, family="sparch_gaussian") -> float:
    """Gaussian (quasi) log-likelihood of a spARCH or E-spARCH field."""
    y = np.asarray(y, dtype=float)
    if family == "sparch_gaussian":
        if params.alpha <= 0:
            return -np.inf
        try:
            y = _nonzero(y)
        except DomainError:
            return -np.inf
        h = h_sparch(y, params.alpha, params.rho, W)
        if np.any(h <= 0):
            return -np.inf
        ld = logdet_jacobian_sparch(y, params.alpha, params.rho, W)
        if not np.isfinite(ld):
            return -np.inf
        return ld + _gauss_logpdf_sum(y / np.sqrt(h))
    if family == "esparch":
        try:
            y, logh, S = _esparch_state(y, params.alpha, params.rho, params.b, W)
        except DomainError:
            return -np.inf
        if logh is None or not S.positive:
            return -np.inf
        ld = -S.logdet_inverse - 0.5 * np.sum(logh)
        z = y * np.exp(-0.5 * logh)
        out = float(ld + _gauss_logpdf_sum(z))
        return out if np.isfinite(out) else -np.inf
    raise ValueError(f"no likelihood for family {family!r}")


def sar_residuals(y, X, lam, beta, B: WeightsMatrix | None):
    """``u = (I - lam B) y - X beta``."""
    y = np.asarray(y, dtype=float)
    u = y.copy()
    if B is not None and lam != 0:
        u = u - lam * (B.matrix @ y)
    if X is not None and len(beta):
        u = u - np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    return u


def sar_logdet(lam, B: WeightsMatrix | None) -> float:
    """``log|det(I - lam B)|``, ``-inf`` when singular.

    Uses the cached eigenvalues ``mu`` of ``B`` (``sum log|1 - lam mu|``)
    up to ``EIGEN_MAX`` locations and a sparse LU beyond.
    """
    if B is None or lam == 0:
        return 0.0
    if B.n <= EIGEN_MAX:
        d = np.abs(1.0 - lam * B.eigenvalues)
        if np.any(d < 1e-300):
            return -np.inf
        return float(np.sum(np.log(d)))
    sign, val = sparse_logdet(sp.identity(B.n, format="csc") - lam * B.matrix.tocsc())
    return val if sign != 0 else -np.inf


def loglik_sarsparch(y, X, params: Parameters, B: WeightsMatrix | None, W: WeightsMatrix,
                     family="sparch_gaussian") -> float:
    """Log-likelihood of ``y = lam B y + X beta + u`` with spARCH disturbances ``u``."""
    ld = sar_logdet(params.lam, B)
    if not np.isfinite(ld):
        return -np.inf
    u = sar_residuals(y, X, params.lam, params.beta, B)
    return ld + loglik_sparch(u, params, W, family)
