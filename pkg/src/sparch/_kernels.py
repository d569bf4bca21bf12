"""Loop-heavy kernels, each with a numba and a numpy/scipy implementation.

The public names at the bottom are bound to one of the two implementations
according to :data:`sparch._accel.USE_NUMBA`. Both variants are importable
under their suffixed names so the test-suite and the benchmark can compare
them in a single process.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# lattice contiguity


@njit(cache=True)
def _lattice_pairs_numba(rows, cols, queen):
    n = rows * cols
    cap = n * (8 if queen else 4)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    k = 0
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    if not queen and dr != 0 and dc != 0:
                        continue
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < rows and 0 <= cc < cols:
                        src[k] = i
                        dst[k] = rr * cols + cc
                        k += 1
    return src[:k], dst[:k]


def _lattice_pairs_numpy(rows, cols, queen):
    offsets = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    if queen:
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    r, c = np.divmod(np.arange(rows * cols, dtype=np.int64), cols)
    src, dst = [], []
    for dr, dc in offsets:
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        src.append((r * cols + c)[ok])
        dst.append((rr * cols + cc)[ok])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    order = np.lexsort((dst, src))
    return src[order], dst[order]


# ---------------------------------------------------------------------------
# depth-first topological order over the predecessor graph
#
# Row i of a CSR matrix lists the locations j with w_ij > 0, i.e. the
# locations i depends on. A node is emitted after all of its predecessors,
# roots and predecessors visited in ascending index order.


@njit(cache=True)
def _topo_order_numba(indptr, indices, n):
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 open, 2 done
    order = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    cursor = np.empty(n, dtype=np.int64)
    out = 0
    for root in range(n):
        if state[root] != 0:
            continue
        top = 0
        stack[0] = root
        cursor[root] = indptr[root]
        state[root] = 1
        while top >= 0:
            v = stack[top]
            p = cursor[v]
            if p < indptr[v + 1]:
                cursor[v] = p + 1
                u = indices[p]
                if state[u] == 1:
                    return False, order[:0]
                if state[u] == 0:
                    state[u] = 1
                    cursor[u] = indptr[u]
                    top += 1
                    stack[top] = u
            else:
                state[v] = 2
                order[out] = v
                out += 1
                top -= 1
    return True, order


def _topo_order_numpy(indptr, indices, n):
    state = np.zeros(n, dtype=np.int8)
    order = []
    cursor = np.array(indptr[:-1], dtype=np.int64)
    for root in range(n):
        if state[root]:
            continue
        stack = [root]
        state[root] = 1
        while stack:
            v = stack[-1]
            p = cursor[v]
            if p < indptr[v + 1]:
                cursor[v] = p + 1
                u = indices[p]
                if state[u] == 1:
                    return False, np.empty(0, dtype=np.int64)
                if state[u] == 0:
                    state[u] = 1
                    stack.append(u)
            else:
                state[v] = 2
                order.append(v)
                stack.pop()
    return True, np.asarray(order, dtype=np.int64)


# ---------------------------------------------------------------------------
# recursive solve of (I - rho diag(eps2) W) y2 = alpha eps2 for acyclic W


@njit(cache=True)
def _oriented_squares_numba(order, indptr, indices, data, eps2, alpha, rho):
    n = eps2.shape[0]
    y2 = np.zeros(n)
    for k in range(order.shape[0]):
        i = order[k]
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * y2[indices[p]]
        y2[i] = eps2[i] * (alpha + rho * acc)
    return y2


def _oriented_squares_numpy(order, indptr, indices, data, eps2, alpha, rho):
    n = eps2.shape[0]
    W = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    # permuted system is lower triangular
    Wp = W[order][:, order]
    M = sp.identity(n, format="csr") - rho * sp.diags(eps2[order]) @ Wp
    sol = spsolve_triangular(M.tocsr(), alpha * eps2[order], lower=True)
    y2 = np.empty(n)
    y2[order] = sol
    return y2


# ---------------------------------------------------------------------------
# batched quadratic forms z' W z, one per row of Z


@njit(cache=True)
def _quadforms_numba(indptr, indices, data, Z):
    m, n = Z.shape
    out = np.zeros(m)
    for k in range(m):
        acc = 0.0
        for i in range(n):
            zi = Z[k, i]
            if zi == 0.0:
                continue
            row = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                row += data[p] * Z[k, indices[p]]
            acc += zi * row
        out[k] = acc
    return out


def _quadforms_numpy(indptr, indices, data, Z):
    n = Z.shape[1]
    W = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    return np.einsum("ij,ij->i", Z, np.asarray((W @ Z.T).T))


if USE_NUMBA:
    lattice_pairs = _lattice_pairs_numba
    topo_order = _topo_order_numba
    oriented_squares = _oriented_squares_numba
    quadforms = _quadforms_numba
else:
    lattice_pairs = _lattice_pairs_numpy
    topo_order = _topo_order_numpy
    oriented_squares = _oriented_squares_numpy
    quadforms = _quadforms_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
