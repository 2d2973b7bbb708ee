"""Command-line interface and config handling."""

import json
import os

import numpy as np
import pytest

from adalase.cli import main
from adalase.config import list_presets, load_config, validate_config
from adalase.errors import ConfigError

MINIMAL = {
    "dataset": {"kind": "synthetic", "synthetic_kind": "striped_patches",
                "n": 60, "side": 4, "train_count": 40, "test_count": 20,
                "noise": 0.1},
    "model": {"kind": "mlp", "hidden": 4},
    "train": {"epochs": 1, "batch_size": 16},
}


def write_config(tmp_path, overrides=None, name="cfg.json"):
    cfg = json.loads(json.dumps(MINIMAL))
    for path, value in (overrides or {}).items():
        node = cfg
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# ---- config validation ----------------------------------------------------------

def test_minimal_config_validates(tmp_path, capsys):
    assert main(["validate", "--config", write_config(tmp_path)]) == 0
    effective = json.loads(capsys.readouterr().out)
    assert effective["train"]["epochs"] == 1
    assert effective["train"]["adalase"]["eta"] == 1.0  # defaults merged in


def test_negative_eta_is_a_field_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"train.adalase.eta": -1})
    assert main(["validate", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "adalase.eta must be > 0" in err


def test_unknown_key_named_in_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"train.learning_rate_warmup": 5})
    assert main(["validate", "--config", cfg]) == 2
    assert "learning_rate_warmup" in capsys.readouterr().err


def test_unknown_keys_rejected_with_dotted_path():
    with pytest.raises(ConfigError, match="train.adalase.decay"):
        validate_config({"train": {"adalase": {"decay": 0.5}}})


def test_missing_dataset_path_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, {"dataset.kind": "raw",
                                  "dataset.path": str(tmp_path / "absent.raw"),
                                  "dataset.test_path": str(tmp_path / "absent.raw")})
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()  # no partial outputs


def test_presets_all_load():
    names = list_presets()
    assert {"mlp-fig3", "mlp-fig5", "cnn-uniform", "cnn-adalase",
            "sweep-kd", "uniform-baseline"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg["preset"] == name


def test_invalid_json_reports_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json }")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(str(path))


# ---- train command ----------------------------------------------------------------

def test_train_writes_all_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    for name in ("metrics.csv", "ratios.csv", "checkpoint.adlw", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert len(manifest["input_hash"]) == 64
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header.startswith("epoch,lr,train_loss")
    assert "q_0" in header and "q_1" in header


def test_train_same_seed_reproduces_outputs(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["train", "--config", cfg, "--seed", "7", "--out", str(out_a)])
    main(["train", "--config", cfg, "--seed", "7", "--out", str(out_b)])
    for name in ("metrics.csv", "ratios.csv", "checkpoint.adlw"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_uniform_schedule_selection_histogram_is_flat(tmp_path):
    cfg = write_config(tmp_path, {"train.schedule.shape": "uniform",
                                  "train.epochs": 2,
                                  "train.batch_size": 2,
                                  "dataset.n": 800,
                                  "dataset.train_count": 700,
                                  "dataset.test_count": 100})
    out = tmp_path / "uni"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "ratios.csv").read_text().splitlines()[1:]
    counts = np.zeros(2)
    for row in rows:
        cells = row.split(",")
        counts += [float(cells[-2]), float(cells[-1])]
    freq = counts / counts.sum()
    assert counts.sum() == 700  # 350 iterations per epoch, 2 epochs
    assert abs(freq[0] - 0.5) < 0.05


# ---- audit command ----------------------------------------------------------------

def test_audit_rows_are_ranged_and_reproducible(tmp_path):
    cfg = write_config(tmp_path, {"train.epochs": 2})
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["audit", "--config", cfg, "--runs", "2", "--out", str(out_a)]) == 0
    assert main(["audit", "--config", cfg, "--runs", "2", "--out", str(out_b)]) == 0
    rows = (out_a / "audit.csv").read_text().splitlines()
    assert rows[0] == "seed,x_metric,y_metric,n_all"
    assert len(rows) == 3
    for row in rows[1:]:
        _, x, y, n_all = row.split(",")
        assert -1.0 <= float(x) <= 1.0
        assert 0.0 <= float(y) <= 1.0
        assert int(n_all) > 0
    assert (out_a / "audit.csv").read_bytes() == (out_b / "audit.csv").read_bytes()


# ---- lower-limit sweep ----------------------------------------------------------------

def test_sweep_writes_one_trajectory_per_value(tmp_path):
    cfg = write_config(tmp_path, {"train.epochs": 1})
    out = tmp_path / "sweep"
    assert main(["sweep-kd", "--config", cfg, "--out", str(out)]) == 0
    for kd in ("0.1", "0.2", "0.3", "0.4", "0.5"):
        assert (out / f"ratios_kd{kd}.csv").exists()
    table = (out / "final_ratios.csv").read_text().splitlines()
    assert table[0] == "kd,q_0,q_1"
    assert len(table) == 6


def test_sweep_runs_share_initial_ratios():
    from adalase.ratios import init_ratios
    for kd in (0.1, 0.2, 0.3, 0.4, 0.5):
        assert np.allclose(init_ratios(2, kd).q, [0.5, 0.5])


def test_sweep_bounds_constrain_trajectories(tmp_path):
    cfg = write_config(tmp_path, {"train.epochs": 2})
    out = tmp_path / "sweep2"
    main(["sweep-kd", "--config", cfg, "--out", str(out)])
    rows = (out / "ratios_kd0.5.csv").read_text().splitlines()[1:]
    for row in rows:
        q0, q1 = (float(v) for v in row.split(",")[1:3])
        assert 0.25 - 1e-9 <= q0 <= 0.75 + 1e-9
        assert 0.25 - 1e-9 <= q1 <= 0.75 + 1e-9


# ---- env plumbing ----------------------------------------------------------------

def test_thread_cap_env_propagates(tmp_path, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("ADALASE_THREADS", "1")
    cfg = write_config(tmp_path)
    main(["validate", "--config", cfg])
    assert os.environ["OMP_NUM_THREADS"] == "1"
