import json
import subprocess
import sys

import numpy as np
import pytest

from polycomplex.cli import benchmark_config, main, read_config


def write(path, text):
    path.write_text(text)
    return path


def small_config(tmp_path, extra=""):
    rows = ["smiles,y"] + [f"{'C' * (i % 5 + 1)}{'O' * (i % 2)},{i % 7 * 0.3}" for i in range(20)]
    write(tmp_path / "d.csv", "\n".join(rows) + "\n")
    return write(
        tmp_path / "b.cfg",
        "dataset = d.csv\ntarget_cols = y\nn_trials = 2\nn_epochs = 1\nn_resamples = 100\n" + extra,
    )


def test_validate(capsys):
    assert main(["validate", "CCO", "c1ccccc1"]) == 0
    assert main(["validate", "CCO", "C1CC"]) == 1
    out = capsys.readouterr().out
    assert "UnmatchedRingClosure" in out and "1/2 parsed" in out


def test_validate_csv(tmp_path, capsys):
    csv_path = write(tmp_path / "m.csv", "name,smiles\na,CCO\nb,C(\n")
    assert main(["validate", "--csv", str(csv_path), "--quiet"]) == 1
    assert "line 3" in capsys.readouterr().out
    assert main(["validate", "--csv", str(csv_path), "--smiles-col", "nope"]) == 1
    assert main(["validate", "--csv", str(tmp_path / "missing.csv")]) == 2
    assert main(["validate"]) == 2


def test_encode_outputs(tmp_path):
    out = tmp_path / "enc"
    assert main(["encode", "O", "CC", "--out", str(out)]) == 0
    lines = (out / "complexes.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["smiles"] == "O" and len(rec["polyatomic"]["complex"]["cells"]) == 28
    header = (out / "features.csv").read_text().splitlines()[0]
    assert header == "id,rows,cols,values"


def test_encode_deep_force_radial(tmp_path):
    out = tmp_path / "enc"
    assert main(["encode", "CCO", "--featurizer", "deep", "--force-model", "--radial", "--out", str(out)]) == 0
    rec = json.loads((out / "complexes.jsonl").read_text())
    assert rec["polyatomic"]["F"] is not None and rec["polyatomic"]["D_E"] is not None
    assert main(["encode", "C1CC", "--out", str(out)]) == 1


def test_encode_seed_precedence(tmp_path, monkeypatch):
    def encoded(*extra):
        out = tmp_path / "s"
        assert main(["encode", "C", "--out", str(out), *extra]) == 0
        return (out / "complexes.jsonl").read_text()

    base = encoded()
    monkeypatch.setenv("POLYCOMPLEX_SEED", "5")
    env5 = encoded()
    assert env5 != base
    assert encoded("--seed", "5") == env5
    assert encoded("--seed", "0") == base


def test_featurize_pads(tmp_path):
    out = tmp_path / "f"
    assert main(["featurize", "O", "CCCC", "--out", str(out)]) == 0
    rows = (out / "features.csv").read_text().splitlines()[1:]
    shapes = {tuple(r.split(",")[1:3]) for r in rows}
    assert len(shapes) == 1


@pytest.mark.parametrize("kernel", ["tanimoto", "string", "wl"])
def test_kernel(tmp_path, kernel):
    out = tmp_path / "k"
    assert main(["kernel", "CCO", "CCC", "O", "--kernel", kernel, "--out", str(out)]) == 0
    K = np.loadtxt(out / "gram.csv", delimiter=",")
    assert K.shape == (3, 3) and np.array_equal(K, K.T)


def test_benchmark(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "run"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    first = (out / "report.json").read_text()
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "report.json").read_text() == first
    report = json.loads(first)
    assert report["config"]["target"] == "y" and len(report["trials"]) == 2
    assert "RMSE" in capsys.readouterr().out
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    assert json.loads((out / "report.json").read_text())["config"]["seed"] == 3


def test_benchmark_usage_errors(tmp_path):
    out = str(tmp_path / "o")
    assert main(["benchmark", "--config", str(tmp_path / "none.cfg"), "--out", out]) == 2
    assert main(["benchmark", "--config", str(small_config(tmp_path, "bogus = 1\n")), "--out", out]) == 2
    assert main(["benchmark", "--config", str(small_config(tmp_path, "kernel = wl\n")), "--out", out]) == 2
    assert main(["benchmark", "--config", str(small_config(tmp_path, "n_trials = x\n")), "--out", out]) == 2
    assert main(["benchmark"]) == 2
    bad = write(tmp_path / "bad.cfg", "dataset = d.csv\ntarget_cols = nope\n")
    assert main(["benchmark", "--config", str(bad), "--out", out]) == 1


def test_read_config(tmp_path):
    cfg = write(tmp_path / "c.cfg", "# comment\na = 1  # trailing\n\nb=x y\n")
    assert read_config(cfg) == {"a": "1", "b": "x y"}
    with pytest.raises(Exception):
        read_config(write(tmp_path / "bad.cfg", "novalue\n"))


def test_benchmark_config_atom_keys(tmp_path):
    small_config(tmp_path)
    cfg = benchmark_config(
        {"dataset": "d.csv", "target_cols": "y", "proton_dim": "2", "featurizer": "deep"}, tmp_path
    )
    assert cfg.atom_config.proton_dim == 2 and cfg.representation == "deep"


def test_rdf(tmp_path):
    rng = np.random.default_rng(0)
    lines = [f"Ar {x:.4f} {y:.4f} {z:.4f}" for x, y, z in rng.uniform(0, 10, (50, 3))]
    xyz = write(tmp_path / "a.xyz", f"50\nargon\n" + "\n".join(lines) + "\n")
    out = tmp_path / "r"
    assert main(["rdf", "--xyz", str(xyz), "--box", "10", "--r-max", "4", "--bins", "8", "--out", str(out)]) == 0
    rows = (out / "rdf.csv").read_text().splitlines()
    assert rows[0] == "r_lo,r_hi,g" and len(rows) == 9
    assert main(["rdf", "--out", str(out)]) == 2
    assert main(["rdf", "--xyz", str(xyz), "--bins", "0", "--out", str(out)]) == 2


def test_potential(tmp_path):
    from helpers import five_atom_chain
    from polycomplex.forcefield import classical_potential

    cx, coords, params = five_atom_chain()
    symbols = ["C", "C", "C", "C", "O"]
    xyz = write(
        tmp_path / "m.xyz",
        "5\nchain\n" + "\n".join(f"{s} {x} {y} {z}" for s, (x, y, z) in zip(symbols, coords.tolist())) + "\n",
    )
    ini = write(
        tmp_path / "p.ini",
        "[thresholds]\nr_nb = 3.0\n[bond]\nC-C = 310 1.526\nC-O = 320 1.41\n"
        "[angle]\nC-C-C = 40 109.5\nC-C-O = 50 109.5\n[dihedral]\n*-C-C-* = 1.4 3 0\n"
        "[lj]\n*-* = 1e5 60\n[charge]\nC = -0.1\nO = 0.4\n",
    )
    out = tmp_path / "pot"
    assert main(["potential", "--xyz", str(xyz), "--params", str(ini), "--out", str(out)]) == 0
    result = json.loads((out / "potential.json").read_text())
    assert result["total"] == pytest.approx(sum(result["breakdown"].values()))
    assert main(["potential", "--xyz", str(xyz), "--params", str(ini), "--smiles", "CCCCO", "--out", str(out)]) == 0
    assert json.loads((out / "potential.json").read_text())["total"] == pytest.approx(result["total"])
    assert main(["potential", "--xyz", str(xyz), "--params", str(ini), "--smiles", "CCO", "--out", str(out)]) == 1
    assert classical_potential(cx, coords, params)[0] != 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "polycomplex.cli", "validate", "CCO"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and "1/1 parsed" in proc.stdout
