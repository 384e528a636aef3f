import json

import numpy as np
import pytest

from pimo import __version__
from pimo.cli import main
from pimo.ensemble import MatrixEnsemble, load_ensemble, save_ensemble
from pimo.obsgraph import TABLE
from pimo.tasks import PairDataset, WordPair, save_pairs
from synthetic import relation_fixture


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    mo, pairs, X = relation_fixture(seed=1, D=3, n_pairs=15)
    ms, _, _ = relation_fixture(seed=1, D=3, n_pairs=15, base_seed=9, eps=0.03)
    save_ensemble(mo, root / "mo")
    save_ensemble(ms, root / "ms")
    # two directed hypernym pairs on top of the relation pairs
    extra = (WordPair(mo.words[0], mo.words[1], "HYPER_HYPONYMS", 4.0, 1),
             WordPair(mo.words[2], mo.words[3], "HYPER_HYPONYMS", 4.0, 2))
    save_pairs(PairDataset(pairs.pairs + extra), root / "pairs.tsv")
    with open(root / "vectors.txt", "w") as fh:
        for w, x in zip(mo.words, X):
            fh.write(w + " " + " ".join(repr(float(v)) for v in x.ravel()[:4]) + "\n")
    return root


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def ens_args(d, a=("0.5",)):
    return ["--mo", d / "mo", "--ms", d / "ms", "--a", *a]


def test_dump_observables(capsys):
    code, out, _ = run(["dump-observables"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["version"] == __version__
    assert len(rep["observables"]) == 28
    assert [tuple(map(tuple, o["edges"])) for o in rep["observables"]] == [o.edges for o in TABLE]


def test_gaussianity_json_and_csv(data, capsys):
    code, out, _ = run(["gaussianity", *ens_args(data, ("1", "0.5"))], capsys)
    assert code == 0
    rep = json.loads(out)
    assert [r["a"] for r in rep["runs"]] == [1.0, 0.5]
    assert len(rep["runs"][0]["result"]["observables"]) == 15
    code, out, _ = run(["gaussianity", *ens_args(data), "--format", "csv"], capsys)
    assert out.splitlines()[0] == "a,id,label,expt_mean,theor_mean,std,normalized_difference"
    assert len(out.splitlines()) == 16


def test_gaussianity_constant_ensemble(tmp_path, capsys):
    save_ensemble(MatrixEnsemble(2, ("a", "b"), [np.eye(2), np.eye(2)]), tmp_path / "c")
    code, out, _ = run(["gaussianity", "--ensemble", tmp_path / "c", "--format", "csv"], capsys)
    assert code == 0
    assert all(line.endswith("undefined") for line in out.splitlines()[1:])


def test_byte_identical_reports(data, tmp_path, capsys):
    args = ["classify", *ens_args(data), "--pairs", data / "pairs.tsv", "--protocol", "split",
            "--reps", "5", "--seed", "3", "--out"]
    assert main([str(a) for a in args + [tmp_path / "r.json"]]) == 0
    first = (tmp_path / "r.json").read_bytes()
    assert main([str(a) for a in args + [tmp_path / "r.json"]]) == 0
    assert (tmp_path / "r.json").read_bytes() == first
    rep = json.loads(first)
    assert rep["seed"] == 3 and rep["config"]["reps"] == 5
    assert "skipped" in rep["runs"][0] and "dropped_observables" in rep["runs"][0]


@pytest.mark.parametrize("mode", ["syn-ant", "syn-ant-none", "syn-vs-rest"])
def test_classify_modes(data, mode, capsys):
    code, out, _ = run(["classify", *ens_args(data), "--pairs", data / "pairs.tsv", "--mode", mode], capsys)
    assert code == 0
    assert json.loads(out)["runs"][0]["result"]["balanced_accuracy"] > 0.5


def test_relation_means_and_histogram(data, tmp_path, capsys):
    code, out, _ = run(["relation-means", *ens_args(data, ("0", "1")), "--pairs", data / "pairs.tsv",
                        "--metric", "maha", "--hist-bins", "10", "--hist-out", tmp_path / "h.csv"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert all(r["result"]["ordering_ok"] for r in rep["runs"])
    hist = (tmp_path / "h.csv").read_text().splitlines()
    assert hist[0] == "a,relation,bin_left,bin_right,normalized_count"
    assert len(hist) == 1 + 2 * 4 * 10  # two a values, four relations present


@pytest.mark.parametrize("dev", ["raw", "expt", "theor"])
def test_features(data, dev, capsys):
    code, out, _ = run(["features", *ens_args(data), "--deviation", dev, "--set", "13", "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split(",")[:3] == ["a", "word", "1"] and len(lines) == 1 + 90


def test_hyper_length(data, capsys):
    code, out, _ = run(["hyper-length", *ens_args(data), "--pairs", data / "pairs.tsv"], capsys)
    assert code == 0
    assert json.loads(out)["runs"][0]["result"]["pairs"] == 2


def test_baselines(data, capsys):
    code, out, _ = run(["baselines", *ens_args(data), "--pairs", data / "pairs.tsv",
                        "--vectors", data / "vectors.txt"], capsys)
    assert code == 0
    assert "vector_set3" in json.loads(out)["runs"][0]["result"]


def test_sample(data, tmp_path, capsys):
    code, out, _ = run(["sample", "--ensemble", data / "mo", "--count", "25", "--seed", "2",
                        "--sample-dir", tmp_path / "s"], capsys)
    assert code == 0
    ens = load_ensemble(tmp_path / "s")
    assert len(ens) == 25 and ens.dim == 3


def test_custom_observable_file(data, tmp_path, capsys):
    f = tmp_path / "obs.json"
    f.write_text(json.dumps([TABLE[0].to_json(), TABLE[15].to_json()]))
    code, out, _ = run(["features", "--ensemble", data / "mo", "--set", "file", "--observables", f], capsys)
    assert code == 0
    assert json.loads(out)["observables"] == ["1", "16"]


@pytest.mark.parametrize("argv, code", [
    (["gaussianity", "--ensemble", "x", "--a", "2"], 2),
    (["classify", "--mo", "m"], 2),
    (["dump-observables", "--set", "99"], 2),
    (["dump-observables", "--set", "file"], 2),
    (["frobnicate"], 2),
])
def test_flag_errors(argv, code, capsys):
    with pytest.raises(SystemExit) as exc:
        if main(argv) == code:
            raise SystemExit(code)
    assert exc.value.code == code


def test_a_outside_range(data, capsys):
    code, _, err = run(["gaussianity", *ens_args(data, ("1.5",))], capsys)
    assert code == 2 and "--a" in err


def test_missing_pairs_file(data, capsys):
    code, _, err = run(["classify", *ens_args(data), "--pairs", data / "nope.tsv"], capsys)
    assert code == 3 and "nope.tsv" in err


def test_malformed_matrix(tmp_path, capsys):
    save_ensemble(MatrixEnsemble(2, ("a",), [np.eye(2)]), tmp_path / "e")
    (tmp_path / "e" / "a.csv").write_text("1,2,3\n4,5,6\n")
    code, _, err = run(["gaussianity", "--ensemble", tmp_path / "e"], capsys)
    assert code == 3 and "a.csv" in err


def test_degenerate_exit_code(tmp_path, capsys):
    save_ensemble(MatrixEnsemble(2, ("a",), [np.eye(2)]), tmp_path / "e")
    (tmp_path / "p.tsv").write_text("word1\tword2\trelation\tscore\thyper_direction\na\ta\tSYNONYMS\t5\t-\n")
    code, _, err = run(["classify", "--ensemble", tmp_path / "e", "--pairs", tmp_path / "p.tsv"], capsys)
    assert code == 5


def test_numerical_exit_code(tmp_path, capsys, monkeypatch):
    import pimo.cli as cli
    from pimo.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("covariance not positive semidefinite")

    monkeypatch.setattr(cli, "sample_ensemble", boom)
    save_ensemble(MatrixEnsemble(2, ("a", "b"), [np.eye(2), 2 * np.eye(2)]), tmp_path / "e")
    code, _, err = run(["sample", "--ensemble", tmp_path / "e", "--sample-dir", tmp_path / "s"], capsys)
    assert code == 4
