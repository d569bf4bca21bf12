import numpy as np
import pytest
from numpy.testing import assert_array_equal

from sparch import lattice
from sparch.io import (
    DataError,
    Dataset,
    check_dimensions,
    load_dataset,
    load_weights,
    save_weights,
    weights_digest,
)
from sparch.weights import WeightsError, WeightsMatrix, row_standardize

import oracles


class TestWeightsFiles:
    @pytest.mark.parametrize("suffix", [".mtx", ".csv"])
    def test_roundtrip_exact(self, tmp_path, suffix):
        rng = np.random.default_rng(0)
        W = WeightsMatrix.from_dense(oracles.random_weights(rng, 12, density=0.3))
        path = tmp_path / f"w{suffix}"
        save_weights(W, path)
        back = load_weights(path)
        assert back.same_as(W)
        assert weights_digest(back) == weights_digest(W)

    @pytest.mark.parametrize("suffix", [".mtx", ".csv"])
    def test_row_standardized_detected(self, tmp_path, suffix):
        W = lattice(4, 5, "queen", standardize=True)
        save_weights(W, tmp_path / f"w{suffix}")
        assert load_weights(tmp_path / f"w{suffix}").row_standardized

    def test_binary_not_flagged(self, tmp_path):
        save_weights(lattice(3, 3), tmp_path / "w.csv")
        assert not load_weights(tmp_path / "w.csv").row_standardized

    def test_symmetric_mtx_expanded(self, tmp_path):
        path = tmp_path / "s.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real symmetric\n"
            "3 3 2\n2 1 1.0\n3 2 0.5\n"
        )
        W = load_weights(path)
        assert_array_equal(W.toarray(), [[0, 1, 0], [1, 0, 0.5], [0, 0.5, 0]])

    def test_csv_without_header(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("1,2,1\n2,1,1\n")
        assert_array_equal(load_weights(path).toarray(), [[0, 1], [1, 0]])

    def test_explicit_dimension(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("i,j,w\n1,2,1\n")
        assert load_weights(path, n=5).n == 5
        with pytest.raises(WeightsError):
            load_weights(path, n=1)

    @pytest.mark.parametrize(
        "body, match",
        [
            ("1,1,1\n", "diagonal"),
            ("1,2,-1\n", "negative"),
            ("1,2,1\n1,2,3\n", "duplicate"),
            ("0,2,1\n", "1-based"),
            ("1,2\n", "3 columns"),
            ("1,2,1\nx,y,z\n", "cannot parse"),
        ],
    )
    def test_rejects(self, tmp_path, body, match):
        path = tmp_path / "w.csv"
        path.write_text(body)
        with pytest.raises(WeightsError, match=match):
            load_weights(path)

    def test_mtx_diagonal_rejected(self, tmp_path):
        path = tmp_path / "d.mtx"
        path.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n")
        with pytest.raises(WeightsError, match="diagonal"):
            load_weights(path)

    def test_mtx_garbage(self, tmp_path):
        path = tmp_path / "g.mtx"
        path.write_text("not a matrix\n")
        with pytest.raises(WeightsError):
            load_weights(path)

    def test_mtx_nonsquare(self, tmp_path):
        path = tmp_path / "r.mtx"
        path.write_text("%%MatrixMarket matrix coordinate real general\n2 3 1\n1 2 1.0\n")
        with pytest.raises(WeightsError, match="square"):
            load_weights(path)

    def test_digest_distinguishes(self):
        W = lattice(3, 3)
        assert weights_digest(W) != weights_digest(row_standardize(W))


class TestDataset:
    def test_load(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("id,y,x1,x2\na,1.5,0,1\nb,-2,1,1\nc,0.25,2,1\n")
        d = load_dataset(path, id_column="id")
        assert d.n == 3
        assert_array_equal(d.y, [1.5, -2, 0.25])
        assert list(d.columns) == ["x1", "x2"]
        assert d.ids == ("a", "b", "c")

    def test_select_columns(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("v,x1,x2\n1,2,3\n4,5,6\n")
        d = load_dataset(path, y="v", columns=["x2"])
        assert list(d.columns) == ["x2"]
        assert d.y_name == "v"

    @pytest.mark.parametrize(
        "text, kwargs, match",
        [
            ("y,x\n1,\n", {}, "row 2, column 'x'"),
            ("y,x\n1,abc\n", {}, "cannot parse"),
            ("y,x\n1,nan\n", {}, "non-finite"),
            ("y,x\n1,2,3\n", {}, "3 fields"),
            ("a,b\n1,2\n", {}, "no column 'y'"),
            ("y,y\n1,2\n", {}, "duplicate"),
            ("y,x\n1,2\n", {"columns": ["z"]}, "no column 'z'"),
            ("y,id\n1,a\n2,a\n", {"id_column": "id"}, "unique"),
            ("", {}, "empty"),
        ],
    )
    def test_errors(self, tmp_path, text, kwargs, match):
        path = tmp_path / "d.csv"
        path.write_text(text)
        with pytest.raises(DataError, match=match):
            load_dataset(path, **kwargs)

    def test_column_length_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros(3), {"x": np.zeros(2)})

    def test_check_dimensions(self):
        check_dimensions(9, W=lattice(3, 3), B=None)
        with pytest.raises(DataError, match="W is 4 x 4"):
            check_dimensions(9, W=lattice(2, 2))
