import json
from pathlib import Path

import numpy as np
import pytest

from subsetquery import BoundInputs, deviation_bound, load_weak
from subsetquery.cli import main
from subsetquery.config import validate_config
from subsetquery.errors import ConfigurationError


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def gen_config(k=10, m=3, n_train=400, n_test=100, seed=1):
    return {
        "version": 1,
        "seed": seed,
        "query": {"k": k, "m": m},
        "mixture": {
            "k": k, "d": k, "sigma": 0.4, "n_train": n_train, "n_test": n_test,
            "means_seed": 5,
        },
    }


def train_config(tmp_path, correction="none", epochs=3, seed=1):
    doc = gen_config(k=4, m=2, n_train=240, n_test=80, seed=seed)
    doc["model"] = {"architecture": "linear"}
    doc["train"] = {
        "epochs": epochs, "batch_size": 16, "learning_rate": 0.2,
        "momentum": 0.9, "loss": "mae", "correction": correction,
    }
    return doc


def read_bytes_map(out: Path, names):
    return {name: (out / name).read_bytes() for name in names}


# ---------------------------------------------------------------------------
# gen


def test_gen_writes_outputs_and_summary(tmp_path, capsys):
    cfg = write_config(tmp_path, gen_config())
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["k"] == 10 and summary["m"] == 3
    assert abs(summary["p_s1_empirical"] - 0.3) < 0.1
    assert summary["p_s1_population"] == pytest.approx(0.3)
    weak = load_weak(out / "weak.sqwk")
    assert weak.n == 400 and weak.provenance.m == 3
    echoed = json.loads((out / "config.json").read_text())
    validate_config(echoed)
    assert "out" not in echoed


def test_gen_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, gen_config())
    names = ("weak.sqwk", "test.csv", "summary.json", "config.json")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["gen", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["gen", "--config", cfg, "--out", str(out2)]) == 0
    assert read_bytes_map(out1, names) == read_bytes_map(out2, names)


def test_gen_inadmissible_m_exits_2(tmp_path):
    out = tmp_path / "out"
    code = main(["gen", "--k", "10", "--m", "10", "--seed", "1", "--out", str(out),
                 "--preset", "desk10"])
    assert code == 2


def test_gen_flags_override_config(tmp_path):
    cfg = write_config(tmp_path, gen_config(m=3))
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--m", "7", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["m"] == 7


def test_gen_unknown_config_key_exits_2(tmp_path):
    doc = gen_config()
    doc["mystery"] = 1
    cfg = write_config(tmp_path, doc)
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_gen_wrong_version_exits_2(tmp_path):
    doc = gen_config()
    doc["version"] = 2
    cfg = write_config(tmp_path, doc)
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_gen_missing_source_exits_2(tmp_path):
    doc = {"version": 1, "seed": 0, "query": {"k": 4, "m": 2}}
    cfg = write_config(tmp_path, doc)
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_gen_from_csv_source(tmp_path):
    data = tmp_path / "src.csv"
    rows = ["0.1,0.2,1", "0.9,0.8,2", "0.2,0.1,1", "0.8,0.9,2"] * 30
    data.write_text("\n".join(rows) + "\n")
    doc = {
        "version": 1, "seed": 3, "query": {"k": 2, "m": 1},
        "source": {"type": "csv", "path": str(data), "k": 2, "n_test": 20},
    }
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_train"] == 100 and summary["n_test"] == 20


def test_gen_corrupt_csv_exits_3(tmp_path):
    data = tmp_path / "src.csv"
    data.write_text("0.1,zap,1\n")
    doc = {
        "version": 1, "seed": 3, "query": {"k": 2, "m": 1},
        "source": {"type": "csv", "path": str(data), "k": 2, "n_test": 1},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["gen", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


# ---------------------------------------------------------------------------
# train / eval


def test_train_writes_checkpoint_metrics_summary(tmp_path):
    cfg = write_config(tmp_path, train_config(tmp_path))
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    for key in (
        "final_test_accuracy", "final_raw_objective_mean",
        "final_corrected_objective_mean", "final_negative_batch_fraction",
        "mean_negative_batch_fraction", "skipped_batches_total",
    ):
        assert key in summary
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == (
        "epoch,raw_objective_mean,corrected_objective_mean,"
        "negative_batch_fraction,skipped_batches,test_accuracy"
    )
    assert (out / "checkpoint.json").exists()


def test_train_rerun_byte_identical_metrics(tmp_path):
    cfg = write_config(tmp_path, train_config(tmp_path))
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["train", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["train", "--config", cfg, "--out", str(out2)]) == 0
    names = ("metrics.csv", "checkpoint.json", "summary.json")
    assert read_bytes_map(out1, names) == read_bytes_map(out2, names)


def test_train_from_generated_files(tmp_path):
    gen_cfg = write_config(tmp_path, gen_config(k=4, m=2, n_train=240, n_test=60))
    gen_out = tmp_path / "data"
    assert main(["gen", "--config", gen_cfg, "--out", str(gen_out)]) == 0
    doc = {
        "version": 1, "seed": 2,
        "data": {"weak": str(gen_out / "weak.sqwk"), "test_csv": str(gen_out / "test.csv")},
        "model": {"architecture": "linear"},
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.2,
                  "loss": "mae", "correction": "nn"},
    }
    cfg = write_config(tmp_path, doc, "train.json")
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["k"] == 4 and summary["m"] == 2


def test_train_missing_weak_file_exits_3(tmp_path):
    doc = {
        "version": 1, "seed": 2,
        "data": {"weak": str(tmp_path / "nope.sqwk"), "test_csv": str(tmp_path / "nope.csv")},
        "model": {"architecture": "linear"},
        "train": {"epochs": 1, "batch_size": 8, "learning_rate": 0.1},
    }
    cfg = write_config(tmp_path, doc)
    code = main(["train", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 3


def test_eval_roundtrip(tmp_path):
    cfg = write_config(tmp_path, train_config(tmp_path))
    run_out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(run_out)]) == 0
    gen_out = tmp_path / "gdata"
    assert main(["gen", "--config", cfg, "--out", str(gen_out)]) == 0
    out = tmp_path / "eval"
    code = main([
        "eval", "--checkpoint", str(run_out / "checkpoint.json"),
        "--test-csv", str(gen_out / "test.csv"), "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "eval.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0
    train_summary = json.loads((run_out / "summary.json").read_text())
    assert report["accuracy"] == pytest.approx(
        train_summary["final_test_accuracy"], abs=0.25
    )


# ---------------------------------------------------------------------------
# verify / sweep / bounds


def test_verify_small_grid_exits_0(tmp_path):
    doc = {
        "version": 1, "seed": 0,
        "verify": {"k_min": 2, "k_max": 4, "joints_per_pair": 5,
                   "sim_draws": 10000, "mc_datasets": 1500},
    }
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "verify.json").read_text())
    assert report["ok"]
    assert report["unbiasedness"]["max_z"] < 4


def test_sweep_rows_and_aggregates(tmp_path):
    doc = train_config(tmp_path)
    doc["sweep"] = {"axis": "batch_size", "values": [8, 16], "repeats": 2}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 + 2  # header + runs + aggregate rows
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["failed_runs"] == 0
    # aggregate mean equals the arithmetic mean of its member rows
    rows = [line.split(",") for line in lines[1:]]
    col = {name: i for i, name in enumerate(lines[0].split(","))}
    for agg in summary["aggregates"]:
        members = [
            float(r[col["test_accuracy"]])
            for r in rows
            if r[col["value"]] == agg["value"] and r[col["repeat"]] != "aggregate"
        ]
        assert agg["test_accuracy_mean"] == pytest.approx(np.mean(members))


def test_bounds_from_flags(tmp_path):
    out = tmp_path / "b"
    code = main([
        "bounds", "--m", "3", "--n1", "300", "--n0", "700", "--delta", "0.05",
        "--c-ell", "2.0", "--rho", "1.0", "--c-r", "1.0",
        "--k", "10", "--n", "1000", "--zeta-f", "0.5", "--kappa", "1.0",
        "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "bounds.json").read_text())
    expected = deviation_bound(
        BoundInputs(m=3, n1=300, n0=700, delta=0.05, c_ell=2.0, rho=1.0, c_r=1.0)
    )
    assert report["deviation_bound"] == pytest.approx(expected, rel=1e-12)
    assert report["excess_risk_bound"] == 2 * report["deviation_bound"]
    assert "unconditional" in report and "corrected" in report


def test_bounds_invalid_inputs_exit_2(tmp_path):
    assert main(["bounds", "--m", "3", "--n1", "300", "--n0", "700",
                 "--delta", "1.5", "--out", str(tmp_path / "b")]) == 2
    assert main(["bounds", "--out", str(tmp_path / "b2")]) == 2


def test_outputs_stay_inside_out_dir(tmp_path, monkeypatch):
    workdir = tmp_path / "cwd"
    workdir.mkdir()
    monkeypatch.chdir(workdir)
    cfg = write_config(tmp_path, gen_config(k=4, m=2, n_train=60, n_test=20))
    out = tmp_path / "only-here"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    assert list(workdir.iterdir()) == []


def test_usage_error_exits_2():
    assert main(["gen", "--bogus-flag"]) == 2
    assert main([]) == 2
