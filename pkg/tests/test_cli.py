import json
from pathlib import Path

import numpy as np
import pytest

from predstack.cli import main
from predstack.core import Manifest, ModelDrawMatrix, save_manifest
from predstack.simlab import gm_loglik_matrices
from predstack.weights import METHODS


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_weights_appendix_table(regression_manifest, capsys):
    code, out, err = run(["weights", "--manifest", regression_manifest,
                          "--method", "stacking,pseudo-bma-plus", "--format", "table"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "The stacking weights are:"
    assert lines[1].startswith('[1,] "Model 1"') and lines[1].rstrip().endswith('"Model 6"')
    assert lines[2].startswith("[2,] ")
    assert "The Pseudo-BMA+ weights using Bayesian Bootstrap are:" in lines
    vals = [float(v.strip('"')) for v in lines[2].split()[1:]]
    assert len(vals) == 6 and sum(vals) == pytest.approx(1.0, abs=1e-5)
    assert "k-hat > 0.7" in err


def test_weights_json_all(regression_manifest, tmp_path, capsys):
    out_path = tmp_path / "w.json"
    code, out, _ = run(["weights", "--manifest", regression_manifest, "--method", "all",
                        "--y", regression_manifest.parent / "y.csv", "--out", out_path], capsys)
    assert code == 0 and out == ""
    blocks = json.loads(out_path.read_text())
    assert [b["method"] for b in blocks] == list(METHODS)
    for b in blocks:
        assert [e["model"] for e in b["weights"]] == [f"Model {k}" for k in range(1, 7)]
        ws = [e["weight"] for e in b["weights"]]
        assert all(round(w, 6) == w for w in ws)
        assert sum(ws) == pytest.approx(1.0, abs=1e-5)
    assert "objective" in blocks[0] and blocks[0]["diagnostics"]["converged"]


def test_weights_single_method_object_and_csv(regression_manifest, capsys):
    code, out, _ = run(["weights", "--manifest", regression_manifest, "--method", "pseudo-bma"], capsys)
    assert code == 0
    assert json.loads(out)["method"] == "pseudo-bma"
    code, out, _ = run(["weights", "--manifest", regression_manifest, "--method", "bma",
                        "--format", "csv"], capsys)
    rows = out.splitlines()
    assert rows[0] == "method,model,weight" and len(rows) == 7


def test_weights_byte_identical(regression_manifest, tmp_path, capsys):
    args = ["weights", "--manifest", regression_manifest, "--method", "stacking,pseudo-bma-plus"]
    run(args + ["--out", tmp_path / "a.json"], capsys)
    run(args + ["--out", tmp_path / "b.json", "--threads", "3"], capsys)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_weights_validation_errors(tmp_path, capsys):
    (tmp_path / "empty.json").write_text(json.dumps({"models": [], "seed": 0}))
    code, _, err = run(["weights", "--manifest", tmp_path / "empty.json"], capsys)
    assert code == 2 and "no models" in err

    models = [ModelDrawMatrix("alpha", np.full((3, 4), -1.0)),
              ModelDrawMatrix("beta", np.full((3, 4), -2.0))]
    path = save_manifest(Manifest(models), tmp_path / "m.json")
    code, _, err = run(["weights", "--manifest", path, "--method", "bma"], capsys)
    assert code == 2 and "alpha" in err and "beta" in err

    code, _, err = run(["weights", "--manifest", path, "--method", "stacking,magic"], capsys)
    assert code == 2 and "magic" in err

    code, _, err = run(["weights", "--manifest", path, "--method", "stack-means"], capsys)
    assert code == 2 and "pred_mean" in err

    code, _, _ = run(["weights", "--manifest", path, "--bb-samples", "10"], capsys)
    assert code == 2
    code, _, _ = run(["weights"], capsys)
    assert code == 2


def test_psis_outputs(regression_manifest, tmp_path, capsys):
    code, _, err = run(["psis", "--manifest", regression_manifest, "--out", tmp_path / "ps"], capsys)
    assert code == 0
    kh = np.loadtxt(tmp_path / "ps" / "k_hat.csv", delimiter=",")
    lpd = np.loadtxt(tmp_path / "ps" / "loo_lpd.csv", delimiter=",")
    assert kh.shape == lpd.shape == (40, 6)
    assert np.all(kh < 0.7)
    doc = json.loads((tmp_path / "ps" / "elpd.json").read_text())
    assert [m["model"] for m in doc["models"]] == [f"Model {k}" for k in range(1, 7)]
    assert doc["models"][0]["elpd_loo"] == pytest.approx(lpd[:, 0].sum())
    assert json.loads((tmp_path / "ps" / "khat_warnings.json").read_text()) == []


def test_psis_gm_manifest_khat_zero(tmp_path, capsys):
    y = np.random.default_rng(0).normal(3.4, 1, 20)
    path = save_manifest(Manifest(gm_loglik_matrices(y, np.arange(1, 9.0))), tmp_path / "gm.json")
    code, _, _ = run(["psis", "--manifest", path, "--out", tmp_path / "o"], capsys)
    assert code == 0
    assert np.all(np.loadtxt(tmp_path / "o" / "k_hat.csv", delimiter=",") == 0)


def test_psis_malformed_csv(tmp_path, capsys):
    (tmp_path / "ll.csv").write_text("-1,-2\n-1,oops\n")
    (tmp_path / "m.json").write_text(json.dumps({"models": [{"id": "a", "loglik": "ll.csv"}], "seed": 0}))
    code, _, err = run(["psis", "--manifest", tmp_path / "m.json", "--out", tmp_path / "o"], capsys)
    assert code == 2 and "cannot parse" in err


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    models = [ModelDrawMatrix(f"m{k}", np.random.default_rng(k).normal(-1, 1, (30, 5))) for k in range(2)]
    path = save_manifest(Manifest(models), tmp_path / "m.json")

    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr("predstack.cli.stack_logscore", boom)
    code, _, err = run(["weights", "--manifest", path], capsys)
    assert code == 3 and "numerical failure" in err


def test_simulate_gm_small_reproducible(tmp_path, capsys):
    cfg = Path(__file__).resolve().parents[1] / "configs" / "gm_small.json"
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "a"], capsys)[0] == 0
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "b"], capsys)[0] == 0
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_errors(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"experiment": "voting"}))
    code, _, err = run(["simulate", "--config", tmp_path / "c.json", "--out", tmp_path], capsys)
    assert code == 2 and "voting" in err
    (tmp_path / "c.json").write_text(json.dumps({"experiment": "gm", "nn": 3}))
    code, _, err = run(["simulate", "--config", tmp_path / "c.json", "--out", tmp_path], capsys)
    assert code == 2 and "nn" in err


def test_score_subcommand(tmp_path, capsys):
    np.savetxt(tmp_path / "draws.csv", np.random.default_rng(1).normal(1, 1, 4000)[None, :], delimiter=",")
    (tmp_path / "comp.json").write_text(json.dumps({"components": [
        {"id": "a", "normal": [0.0, 1.0]}, {"id": "b", "draws": "draws.csv"}]}))
    (tmp_path / "w.json").write_text(json.dumps({"method": "stacking", "weights": [
        {"model": "a", "weight": 1.0}, {"model": "b", "weight": 0.0}]}))
    (tmp_path / "y.csv").write_text("0.0\n")
    base = ["score", "--components", tmp_path / "comp.json", "--weights", tmp_path / "w.json",
            "--y", tmp_path / "y.csv"]
    code, out, _ = run(base, capsys)
    assert code == 0 and json.loads(out)["mean_score"] == pytest.approx(-0.9189385, abs=1e-7)
    code, out, _ = run(base + ["--rule", "crps", "--grid=-10:10:2001"], capsys)
    assert json.loads(out)["scores"][0] == pytest.approx(-0.2336949, abs=1e-5)
    code, _, err = run(base + ["--rule", "crps", "--grid=-1:1:100"], capsys)
    assert code == 2
    code, _, _ = run(base + ["--rule", "crps", "--grid", "bad"], capsys)
    assert code == 2
