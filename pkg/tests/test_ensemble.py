import json
import logging

import numpy as np
import pytest

from pimo.ensemble import MatrixEnsemble, compute_stats, load_ensemble, mix, read_matrix, save_ensemble
from pimo.errors import DegenerateDataError, IngestionError
from pimo.obsgraph import canonical_set, table_row


def write_dir(path, mats, words=None, dim=None):
    path.mkdir(exist_ok=True)
    words = words or [f"w{i}" for i in range(len(mats))]
    dim = dim or len(mats[0])
    (path / "manifest.json").write_text(json.dumps({"dim": dim, "format": "csv", "words": words}))
    for w, m in zip(words, mats):
        (path / f"{w}.csv").write_text("\n".join(",".join(str(x) for x in row) for row in m) + "\n")
    return path


def test_load_two_matrices(tmp_path):
    d = write_dir(tmp_path / "e", [np.eye(3), 2 * np.ones((3, 3))])
    ens = load_ensemble(d)
    assert len(ens) == 2 and ens.dim == 3
    np.testing.assert_array_equal(ens["w1"], 2 * np.ones((3, 3)))


def test_round_trip(tmp_path, rng):
    ens = MatrixEnsemble(3, ("a", "b"), rng.normal(size=(2, 3, 3)))
    save_ensemble(ens, tmp_path / "e")
    back = load_ensemble(tmp_path / "e")
    assert back.words == ens.words
    np.testing.assert_array_equal(back.matrices, ens.matrices)


def test_bad_row_names_file(tmp_path):
    d = write_dir(tmp_path / "e", [np.eye(3), np.eye(3)])
    (d / "w1.csv").write_text("1,0,0\n0,1,0,5\n0,0,1\n")
    with pytest.raises(IngestionError, match="w1.csv"):
        load_ensemble(d)


def test_non_numeric_cell(tmp_path):
    d = write_dir(tmp_path / "e", [np.eye(2)])
    (d / "w0.csv").write_text("1,x\n0,1\n")
    with pytest.raises(IngestionError, match="w0.csv"):
        load_ensemble(d)


def test_empty_directory(tmp_path):
    (tmp_path / "e").mkdir()
    with pytest.raises(IngestionError, match="empty"):
        load_ensemble(tmp_path / "e")


def test_missing_matrix_file(tmp_path):
    d = write_dir(tmp_path / "e", [np.eye(2)])
    (d / "manifest.json").write_text(json.dumps({"dim": 2, "words": ["w0", "w9"]}))
    with pytest.raises(IngestionError, match="w9"):
        load_ensemble(d)


def test_read_matrix_whitespace(tmp_path):
    f = tmp_path / "m.txt"
    f.write_text("1 2\n3 4\n")
    np.testing.assert_array_equal(read_matrix(f), [[1, 2], [3, 4]])


def test_mix_endpoints_and_linearity(rng):
    mo = MatrixEnsemble(2, ("x", "y"), rng.normal(size=(2, 2, 2)))
    ms = MatrixEnsemble(2, ("y", "x"), rng.normal(size=(2, 2, 2)))
    np.testing.assert_array_equal(mix(mo, ms, 1.0)["x"], mo["x"])
    np.testing.assert_array_equal(mix(mo, ms, 0.0)["x"], ms["x"])
    a = MatrixEnsemble(2, ("w",), [np.eye(2)])
    b = MatrixEnsemble(2, ("w",), [2 * np.eye(2)])
    np.testing.assert_array_equal(mix(a, b, 0.5)["w"], 1.5 * np.eye(2))


def test_mix_drops_unshared(caplog):
    mo = MatrixEnsemble(1, ("a", "b"), np.ones((2, 1, 1)))
    ms = MatrixEnsemble(1, ("b", "c", "d"), np.ones((3, 1, 1)))
    with caplog.at_level(logging.WARNING):
        out = mix(mo, ms, 0.3)
    assert out.words == ("b",) and out.dropped == 3
    assert "dropped" in caplog.text


def test_mix_errors():
    a = MatrixEnsemble(1, ("a",), np.ones((1, 1, 1)))
    with pytest.raises(ValueError):
        mix(a, a, 1.5)
    with pytest.raises(IngestionError):
        mix(a, MatrixEnsemble(2, ("a",), np.ones((1, 2, 2))), 0.5)
    with pytest.raises(DegenerateDataError):
        mix(a, MatrixEnsemble(1, ("z",), np.ones((1, 1, 1))), 0.5)


def test_stats_plus_minus(M22):
    ens = MatrixEnsemble(2, ("p", "m"), [M22, -M22])
    st = compute_stats([table_row(1)], ens)
    assert st.mean[0] == 0 and st.std[0] == 5


def test_stats_constant_and_single(M22):
    obs = canonical_set("28").observables
    st = compute_stats(obs, MatrixEnsemble(2, ("a", "b"), [M22, M22]))
    assert np.all(st.std == 0)
    st1 = compute_stats(obs[:3], MatrixEnsemble(2, ("a",), [M22]))
    np.testing.assert_allclose(st1.mean, [5, 10, 30])
    assert np.all(st1.std == 0)
