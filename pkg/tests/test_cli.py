import json
import math

import numpy as np
import pytest

from femnn import cli
from femnn import experiments as ex
from femnn.fem import RhsFunction, solve
from femnn.mesh import Rect, build_mesh

TINY = ["--n-train", "6", "--n-test", "3", "--hidden", "8,8", "--epochs", "2", "--batch-size", "64"]


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    return tmp_path


def assert_schema(path):
    rows = ex.read_csv(path)
    assert rows
    for row in rows:
        for key in ex.COLUMNS:
            if key in ("train_loss", "val_loss") and row["preprocessing"] == "zero-network":
                continue
            if isinstance(row[key], float) and key not in ("train_loss", "val_loss"):
                assert math.isfinite(row[key]), key
    return rows


def test_generate_train_eval(root, capsys):
    assert cli.main(["generate", *TINY]) == 0
    out = root / "runs" / "generate"
    assert (out / "train.bin").exists() and (out / "test.bin").exists()
    assert cli.main(["train", *TINY, "--output-dir", "runs/generate"]) == 0
    assert cli.main(["eval", *TINY, "--output-dir", "runs/generate"]) == 0
    rows = assert_schema(out / "eval.csv")
    assert rows[0]["n_params"] == 13 * 8 + 8 + 8 * 8 + 8 + 8 * 9 + 9
    manifest = json.loads((out / "eval_manifest.json").read_text())
    assert manifest["points"][0]["config"]["n_train"] == 6
    assert "uff-un (test)" in capsys.readouterr().out


def test_mismatched_dataset_rejected(root, capsys):
    assert cli.main(["generate", *TINY]) == 0
    code = cli.main(["train", *TINY[:-6], "--hidden", "8", "--k", "2", "--output-dir", "runs/generate"])
    assert code != 0
    assert "does not match" in capsys.readouterr().err


def test_config_file_and_overrides(root, tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"n_train": 4, "n_test": 2, "hidden": [4], "epochs": 1, "output_dir": "fromfile"}))
    assert cli.main(["convergence", "--config", str(cfg_path), "--levels", "1", "--epochs", "2"]) == 0
    rows = assert_schema(root / "fromfile" / "convergence.csv")
    manifest = json.loads((root / "fromfile" / "convergence_manifest.json").read_text())
    assert manifest["points"][0]["config"]["epochs"] == 2
    assert rows[0]["layers"] == 1 and rows[0]["neurons"] == 4


def test_zero_network_ablation(root):
    assert cli.main(["convergence", *TINY, "--levels", "1,2", "--zero-network"]) == 0
    for row in assert_schema(root / "runs" / "convergence" / "convergence.csv"):
        for metric in ex.METRICS:
            assert row[ex.error_column(metric, "un")] == pytest.approx(row[ex.error_column(metric, "uc")], rel=1e-12)
        assert row["preprocessing"] == "zero-network"


def test_sweep_and_preprocessing(root):
    assert cli.main(["sweep", *TINY, "--axis", "neurons", "--values", "4,8"]) == 0
    rows = assert_schema(root / "runs" / "sweep" / "sweep_neurons.csv")
    assert [r["neurons"] for r in rows] == [4, 8]
    manifest = json.loads((root / "runs" / "sweep" / "sweep_neurons_manifest.json").read_text())
    seeds = [p["seeds"]["init"] for p in manifest["points"]]
    assert seeds[0] != seeds[1]
    assert cli.main(["preprocessing", *TINY, "--sizes", "6", "--reps", "2"]) == 0
    rows = assert_schema(root / "runs" / "preprocessing" / "preprocessing.csv")
    assert [r["preprocessing"] for r in rows] == ["none", "minmax", "standardize"] * 2
    # the coarse/fine columns depend only on the data, shared within a repetition
    assert len({r["uff-uf (test)"] for r in rows[:3]}) == 1


def test_generalize_outputs(root):
    assert cli.main(["generalize", *TINY]) == 0
    out = root / "runs" / "generalize"
    rows = assert_schema(out / "generalize.csv")
    assert rows[0]["n_test"] == 1
    sol, header = ex.load_solution(out / "generalize_k1_uN.bin")
    assert header["name"] == "u_N" and header["rhs"] == [1.2, 0.2, 1.4, 0.4]
    assert (sol.mesh.nx, sol.mesh.ny) == (32, 16)
    coarse, _ = ex.load_solution(out / "generalize_k1_uH.bin")
    assert coarse.mesh.n_cells == 128  # one patch per coarse cell


def test_generalize_matches_direct_solve(root):
    assert cli.main(["generalize", *TINY]) == 0
    sol, _ = ex.load_solution(root / "runs" / "generalize" / "generalize_k1_uh.bin")
    direct = solve(build_mesh(Rect(0, 2, 0, 1), 32, 16), RhsFunction(1.2, 0.2, 1.4, 0.4))
    np.testing.assert_allclose(sol.coeffs, direct.coeffs, rtol=0, atol=1e-15)


def test_reruns_are_bit_identical(root):
    for d in ("a", "b"):
        assert cli.main(["train", *TINY, "--output-dir", d]) == 0
        assert cli.main(["eval", *TINY, "--output-dir", d]) == 0
    for name in ("model.ckpt", "eval.csv"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()


def test_bad_input_exits_nonzero(root, capsys):
    assert cli.main(["train", "--k", "0"]) == 1
    assert "k must be" in capsys.readouterr().err
    assert cli.main(["eval", *TINY, "--checkpoint", str(root / "missing.ckpt")]) == 1
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--axis", "depth"])
    bad = root / "bad.json"
    bad.write_text(json.dumps({"n_trian": 3}))
    assert cli.main(["generate", "--config", str(bad)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_solver_failure_is_reported(root, capsys):
    code = cli.main(["generate", "--n-train", "2", "--n-test", "1", "--cg-tol", "0"])
    assert code == 1
    assert "failed" in capsys.readouterr().err


def test_config_roundtrip_and_seeds():
    cfg = ex.ExperimentConfig(seed=3)
    back = ex.ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert cfg.seeds() == back.seeds()
    assert len(set(cfg.seeds().values())) == 4
    assert ex.ExperimentConfig(seed=4).seeds() != cfg.seeds()
    assert cfg.with_overrides(init_seed=11).seeds()["init"] == 11
    assert cfg.dims() == [13, 512, 512, 512, 512, 9]
    with pytest.raises(ValueError):
        ex.ExperimentConfig(preprocessing="robust")


def test_csv_schema_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        ex.read_csv(p)
