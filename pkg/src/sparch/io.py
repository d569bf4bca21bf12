"""Reading and writing weighting matrices and data tables."""

from __future__ import annotations

import csv
import hashlib
import io as _io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .weights import WeightsError, WeightsMatrix

__all__ = [
    "DataError",
    "Dataset",
    "load_weights",
    "save_weights",
    "load_dataset",
    "weights_digest",
    "check_dimensions",
]

_ROW_TOL = 1e-12


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """An observation vector with optional named covariates and location ids."""

    y: np.ndarray
    columns: dict = field(default_factory=dict)
    ids: tuple | None = None
    y_name: str = "y"

    def __post_init__(self):
        n = self.y.shape[0]
        for name, col in self.columns.items():
            if col.shape[0] != n:
                raise DataError(f"column {name!r} has {col.shape[0]} rows, y has {n}")
        if self.ids is not None:
            if len(self.ids) != n:
                raise DataError(f"{len(self.ids)} ids for {n} observations")
            if len(set(self.ids)) != n:
                seen = set()
                dup = next(i for i in self.ids if i in seen or seen.add(i))
                raise DataError(f"location identifiers must be unique; {dup!r} repeats")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])


def _detect_row_standardized(m) -> bool:
    rs = np.asarray(m.sum(axis=1)).ravel()
    nz = rs != 0
    return bool(nz.any() and np.all(np.abs(rs[nz] - 1.0) <= _ROW_TOL))


def _from_triplets(rows, cols, vals, n, source) -> WeightsMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if rows.size:
        lo = min(rows.min(), cols.min())
        if lo < 0:
            raise WeightsError(f"{source}: indices must be 1-based positive integers")
        hi = max(rows.max(), cols.max()) + 1
        if n is None:
            n = int(hi)
        elif hi > n:
            raise WeightsError(f"{source}: index {hi} exceeds dimension {n}")
    elif n is None:
        raise WeightsError(f"{source}: no entries and no dimension given")
    diag = np.flatnonzero((rows == cols) & (vals != 0))
    if diag.size:
        k = diag[0]
        raise WeightsError(
            f"{source}: diagonal entry ({rows[k] + 1}, {cols[k] + 1}) = {vals[k]!r} is not allowed"
        )
    neg = np.flatnonzero(vals < 0)
    if neg.size:
        k = neg[0]
        raise WeightsError(f"{source}: negative weight {vals[k]!r} at ({rows[k] + 1}, {cols[k] + 1})")
    key = rows * n + cols
    uniq, counts = np.unique(key, return_counts=True)
    if np.any(counts > 1):
        d = uniq[np.argmax(counts > 1)]
        raise WeightsError(f"{source}: duplicate entry ({d // n + 1}, {d % n + 1})")
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    m.eliminate_zeros()
    return WeightsMatrix(m, row_standardized=_detect_row_standardized(m))


def load_weights(path, n: int | None = None) -> WeightsMatrix:
    """Load a weighting matrix from Matrix Market (``.mtx``) or triplet CSV.

    Triplet CSV files have columns ``i, j, w`` with 1-based indices and an
    optional header row. Symmetric Matrix Market storage is expanded to the
    full pattern. Diagonal entries, negative weights and repeated entries are
    rejected. A matrix whose non-empty rows all sum to one is flagged as
    row-standardized.
    """
    path = Path(path)
    if path.suffix.lower() in (".mtx", ".mm"):
        return _load_mtx(path, n)
    return _load_triplet_csv(path, n)


def _load_mtx(path, n):
    with open(path, "rb") as fh:
        text = fh.read()
    try:
        m = scipy.io.mmread(_io.BytesIO(text))
    except Exception as exc:  # scipy raises several types for malformed files
        raise WeightsError(f"{path}: not a valid Matrix Market file ({exc})") from exc
    if not sp.issparse(m):
        m = sp.coo_matrix(np.asarray(m))
    m = sp.coo_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise WeightsError(f"{path}: weights must be square, got {m.shape}")
    if n is not None and m.shape[0] != n:
        raise WeightsError(f"{path}: matrix is {m.shape[0]} x {m.shape[0]}, expected {n}")
    # scipy mirrors symmetric storage into the full pattern
    rows, cols, vals = m.row, m.col, m.data
    return _from_triplets(rows, cols, vals, m.shape[0], str(path))


def _load_triplet_csv(path, n):
    rows, cols, vals = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec) or rec[0].lstrip().startswith("#"):
                continue
            if len(rec) != 3:
                raise WeightsError(f"{path}:{lineno}: expected 3 columns (i, j, w), got {len(rec)}")
            try:
                i, j, w = int(rec[0]), int(rec[1]), float(rec[2])
            except ValueError:
                if lineno == 1 or not rows:
                    continue  # header
                raise WeightsError(f"{path}:{lineno}: cannot parse {rec!r}") from None
            if i < 1 or j < 1:
                raise WeightsError(f"{path}:{lineno}: indices are 1-based, got ({i}, {j})")
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(w)
    return _from_triplets(rows, cols, vals, n, str(path))


def save_weights(W: WeightsMatrix, path) -> None:
    """Write ``W`` as Matrix Market (``.mtx``) or triplet CSV, full precision."""
    path = Path(path)
    coo = W.matrix.tocoo()
    if path.suffix.lower() in (".mtx", ".mm"):
        scipy.io.mmwrite(str(path), coo, field="real", symmetry="general", precision=17)
        return
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["i", "j", "w"])
        for i, j, v in zip(coo.row, coo.col, coo.data):
            wr.writerow([i + 1, j + 1, repr(float(v))])


def weights_digest(W: WeightsMatrix) -> str:
    """SHA-256 over the canonical CSR arrays."""
    m = W.matrix
    h = hashlib.sha256()
    h.update(np.asarray(m.shape, dtype="<i8").tobytes())
    h.update(m.indptr.astype("<i8").tobytes())
    h.update(m.indices.astype("<i8").tobytes())
    h.update(m.data.astype("<f8").tobytes())
    return h.hexdigest()


def load_dataset(path, y: str = "y", columns=None, id_column: str | None = None) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`.

    ``columns`` selects covariates (default: every column other than ``y``
    and the id column). Missing or non-numeric cells raise :class:`DataError`
    naming the row and column.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        records = [(lineno, rec) for lineno, rec in enumerate(reader, start=2) if rec]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header {header}")
    if y not in header:
        raise DataError(f"{path}: no column {y!r} in header {header}")
    if id_column is not None and id_column not in header:
        raise DataError(f"{path}: no id column {id_column!r} in header {header}")
    if columns is None:
        columns = [c for c in header if c not in (y, id_column)]
    for c in columns:
        if c not in header:
            raise DataError(f"{path}: no column {c!r} in header {header}")
    pos = {c: k for k, c in enumerate(header)}
    wanted = [y] + list(columns)
    data = {c: np.empty(len(records)) for c in wanted}
    ids = []
    for r, (lineno, rec) in enumerate(records):
        if len(rec) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(rec)} fields, header has {len(header)}")
        for c in wanted:
            cell = rec[pos[c]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {lineno}, column {c!r}: cannot parse {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {lineno}, column {c!r}: missing or non-finite value")
            data[c][r] = v
        if id_column is not None:
            ids.append(rec[pos[id_column]].strip())
    return Dataset(
        y=data[y],
        columns={c: data[c] for c in columns},
        ids=tuple(ids) if id_column is not None else None,
        y_name=y,
    )


def check_dimensions(n: int, **matrices) -> None:
    """Raise :class:`DataError` unless every matrix has ``n`` locations."""
    for name, M in matrices.items():
        if M is not None and M.n != n:
            raise DataError(f"data has n = {n} observations but {name} is {M.n} x {M.n}")
