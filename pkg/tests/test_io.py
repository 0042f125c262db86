import json

import numpy as np
import pytest

from dcesim import io as dio
from dcesim.fock import build_space, pure_state, tomography_subset


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_columns_round_trip_exactly(tmp_path, fmt, rng):
    cols = {"t_s": np.linspace(0, 5e-6, 7), "value": rng.normal(size=7), "tiny": rng.normal(size=7) * 1e-300}
    path = dio.write_columns(tmp_path / "table", cols, fmt)
    assert path.suffix == "." + fmt
    back = dio.read_columns(path)
    assert list(back) == list(cols)
    for k in cols:
        assert np.array_equal(back[k], cols[k])


def test_columns_nan_and_strings(tmp_path):
    cols = {"mode": np.array([0, 1]), "v": np.array([np.nan, 0.5])}
    back = dio.read_columns(dio.write_columns(tmp_path / "a", cols, "json"))
    assert np.isnan(back["v"][0]) and back["v"][1] == 0.5
    back = dio.read_columns(dio.write_columns(tmp_path / "b", {"row": np.array(["00", "01"])}, "csv"))
    assert list(back["row"]) == ["00", "01"]


def test_columns_validation(tmp_path):
    with pytest.raises(ValueError):
        dio.write_columns(tmp_path / "x", {"a": np.zeros(2), "b": np.zeros(3)})
    with pytest.raises(ValueError):
        dio.write_columns(tmp_path / "x", {"a": np.zeros(2)}, "xml")


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_real_matrix_round_trip(tmp_path, fmt, rng):
    m = 2.1 + 1e-6 * rng.normal(size=(5, 8))
    paths = dio.write_real_matrix(tmp_path / "n", m, fmt, rows=np.arange(5.0))
    back = dio.read_real_matrix(paths[0])
    assert np.array_equal(back, m)
    if fmt == "binary":
        meta = json.loads(paths[1].read_text())
        assert meta["dtype"] == "<f8" and meta["shape"] == [5, 8]
        assert paths[0].stat().st_size == 5 * 8 * 8


def test_real_matrix_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        dio.write_real_matrix(tmp_path / "n", np.zeros(3))
    with pytest.raises(ValueError):
        dio.write_real_matrix(tmp_path / "n", np.zeros((2, 2)), "hdf5")


def test_complex_matrix_round_trip(tmp_path, rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    labels = [(0, 0), (0, 1), (1, 0), (1, 1)]
    path = dio.write_complex_matrix(tmp_path / "rho", m, labels=labels, time_s=1e-6)
    back, doc = dio.read_complex_matrix(path)
    assert np.array_equal(back, m)
    assert doc["format"] == dio.MATRIX_FORMAT
    assert doc["labels"] == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert doc["time_s"] == 1e-6


def test_tomography_rows():
    space = build_space(2, 3)
    vec = np.zeros(9, complex)
    vec[0] = vec[4] = 1 / np.sqrt(2)
    rows = dio.tomography_rows(tomography_subset(pure_state(vec, space), 2))
    assert len(rows["row"]) == 16
    i = list(zip(rows["row"], rows["col"])).index(("00", "11"))
    assert rows["re"][i] == pytest.approx(0.5) and rows["im"][i] == 0


def test_atomic_write_leaves_no_temporaries(tmp_path):
    p = dio.atomic_write(tmp_path / "sub" / "f.txt", "hello")
    dio.atomic_write(p, b"bytes")
    assert p.read_bytes() == b"bytes"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]
    assert dio.file_digest(p) == __import__("hashlib").sha256(b"bytes").hexdigest()


def test_json_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        dio.write_json(tmp_path / "x.json", {"a": float("nan")})
