"""Command-line entry point.

Subcommands: gen, train, eval, verify, sweep, bounds.  Every command is a
pure function of its merged configuration and input files: outputs land
only inside --out, timing never reaches a file, and reruns are
byte-identical.

Exit codes: 0 success, 2 configuration error, 3 data/file error,
4 runtime error or failed verification.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bounds import (
    BoundInputs,
    corrected_bias_bound,
    deviation_bound,
    excess_risk_bound,
    unconditional_adjustment,
)
from .data import (
    LabeledDataset,
    generate_mixture,
    load_csv,
    load_idx,
    load_weak,
    save_csv,
    save_weak,
    weakify,
)
from .errors import ConfigurationError, DataError, SubsetQueryError
from .model import init_scorer, load_checkpoint, save_checkpoint
from .queries import group_proportion
from .rng import derive_seed, spawn_rng
from .trainer import evaluate, metrics_csv_lines, sweep, train
from .verify import run_full_verification

log = logging.getLogger("subsetquery")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

# Fixed stream indices for seeds derived from the run seed.
STREAM_MIXTURE = 10
STREAM_WEAKIFY = 11
STREAM_INIT = 12
STREAM_SHUFFLE = 13


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _load_labeled_source(cfg: dict, seed: int) -> tuple[LabeledDataset, LabeledDataset, str]:
    """Labeled (train, test) pair plus a source id for provenance."""
    if "mixture" in cfg:
        spec = cfgmod.build_mixture(cfg)
        train_set, test_set = generate_mixture(spec, spawn_rng(seed, STREAM_MIXTURE))
        preset = cfg["mixture"].get("preset", "custom")
        return train_set, test_set, f"mixture:{preset}"
    if "source" in cfg:
        src = cfg["source"]
        if src["type"] == "idx":
            full = load_idx(src["images"], src["labels"])
            if "test_images" in src:
                test_set = load_idx(src["test_images"], src["test_labels"])
                return full, test_set, f"idx:{Path(src['images']).name}"
            train_set, test_set = _holdout(full, src)
            return train_set, test_set, f"idx:{Path(src['images']).name}"
        label_col = src.get("label_col", -1)
        delim = src.get("delimiter", ",")
        full = load_csv(src["path"], label_col, src["k"], delim)
        if "test_path" in src:
            test_set = load_csv(src["test_path"], label_col, src["k"], delim)
            return full, test_set, f"csv:{Path(src['path']).name}"
        train_set, test_set = _holdout(full, src)
        return train_set, test_set, f"csv:{Path(src['path']).name}"
    raise ConfigurationError("this command needs a config.mixture or config.source section")


def _holdout(full: LabeledDataset, src: dict) -> tuple[LabeledDataset, LabeledDataset]:
    if "n_test" not in src:
        raise ConfigurationError("config.source needs test files or an n_test holdout count")
    n_test = src["n_test"]
    if not (1 <= n_test < full.n):
        raise ConfigurationError(f"n_test must be in 1..{full.n - 1}")
    return (
        LabeledDataset(full.features[:-n_test], full.labels[:-n_test], full.k),
        LabeledDataset(full.features[-n_test:], full.labels[-n_test:], full.k),
    )


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: dict, args, out: Path) -> int:
    seed = cfg.get("seed", 0)
    query = cfgmod.build_query(cfg)
    train_set, test_set, source_id = _load_labeled_source(cfg, seed)
    weak = weakify(train_set, query, derive_seed(seed, STREAM_WEAKIFY), source_id)
    save_weak(weak, out / "weak.sqwk")
    save_csv(test_set, out / "test.csv")
    n1 = int(weak.responses.sum())
    summary = {
        "command": "gen",
        "source_id": source_id,
        "seed": seed,
        "k": query.k,
        "m": query.m,
        "n_train": weak.n,
        "n_test": test_set.n,
        "d": weak.d,
        "n1": n1,
        "n0": weak.n - n1,
        "p_s1_empirical": n1 / weak.n,
        "p_s1_population": group_proportion(query, 1),
        "weak_file": "weak.sqwk",
        "test_file": "test.csv",
    }
    _write_json(out / "summary.json", summary)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _training_inputs(cfg: dict, seed: int):
    """(weak train set, labeled test set) from files or inline generation."""
    if "data" in cfg:
        data = cfg["data"]
        weak = load_weak(data["weak"])
        k = data.get("test_k", weak.provenance.k)
        test_set = load_csv(data["test_csv"], data.get("test_label_col", -1), k)
        return weak, test_set
    query = cfgmod.build_query(cfg)
    train_set, test_set, source_id = _load_labeled_source(cfg, seed)
    weak = weakify(train_set, query, derive_seed(seed, STREAM_WEAKIFY), source_id)
    return weak, test_set


def cmd_train(cfg: dict, args, out: Path) -> int:
    seed = cfg.get("seed", 0)
    weak, test_set = _training_inputs(cfg, seed)
    model = cfgmod.build_model_spec(cfg)
    train_cfg = cfgmod.build_train_config(cfg, derive_seed(seed, STREAM_SHUFFLE))
    scorer = init_scorer(
        model.architecture,
        weak.d,
        weak.provenance.k,
        spawn_rng(seed, STREAM_INIT),
        hidden_width=model.hidden_width,
    )
    log.info(
        "training %s on n=%d (k=%d, m=%d), %d epochs",
        model.architecture, weak.n, weak.provenance.k, weak.provenance.m, train_cfg.epochs,
    )
    scorer, metrics = train(scorer, weak, train_cfg, test_set)
    save_checkpoint(scorer, out / "checkpoint.json")
    (out / "metrics.csv").write_text("\n".join(metrics_csv_lines(metrics)) + "\n")
    final = metrics[-1]
    summary = {
        "command": "train",
        "seed": seed,
        "k": weak.provenance.k,
        "m": weak.provenance.m,
        "n_train": weak.n,
        "epochs": train_cfg.epochs,
        "loss": train_cfg.loss.spec_string(),
        "correction": train_cfg.correction.spec_string(),
        "final_test_accuracy": final.test_accuracy,
        "final_raw_objective_mean": final.raw_objective_mean,
        "final_corrected_objective_mean": final.corrected_objective_mean,
        "final_negative_batch_fraction": final.negative_batch_fraction,
        "mean_negative_batch_fraction": float(
            np.mean([em.negative_batch_fraction for em in metrics])
        ),
        "skipped_batches_total": int(sum(em.skipped_batches for em in metrics)),
        "checkpoint": "checkpoint.json",
        "metrics_csv": "metrics.csv",
    }
    _write_json(out / "summary.json", summary)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(cfg: dict, args, out: Path) -> int:
    if "eval" not in cfg:
        raise ConfigurationError("eval needs a config.eval section or flags")
    ev = cfg["eval"]
    scorer = load_checkpoint(ev["checkpoint"])
    test_set = load_csv(ev["test_csv"], ev.get("test_label_col", -1), ev.get("test_k", scorer.output_dim))
    accuracy = evaluate(scorer, test_set)
    summary = {"command": "eval", "accuracy": accuracy, "n_test": test_set.n}
    _write_json(out / "eval.json", summary)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_verify(cfg: dict, args, out: Path) -> int:
    seed = cfg.get("seed", 0)
    ver = cfg.get("verify", {})
    report = run_full_verification(
        k_min=ver.get("k_min", 2),
        k_max=ver.get("k_max", 8),
        joints_per_pair=ver.get("joints_per_pair", 100),
        sim_draws=ver.get("sim_draws", 100_000),
        mc_datasets=ver.get("mc_datasets", 10_000),
        seed=seed,
    )
    _write_json(out / "verify.json", report)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(report, sort_keys=True))
    if not report["ok"]:
        failed = [
            name
            for name, entry in report["identity_suite"]["identities"].items()
            if not entry["ok"]
        ]
        if not report["unbiasedness"]["ok"]:
            failed.append("unbiasedness")
        log.error("verification failed: %s", ", ".join(failed))
        return EXIT_RUNTIME
    return EXIT_OK


SWEEP_COLUMNS = (
    "axis", "value", "repeat", "run_seed", "ok", "epoch",
    "raw_objective_mean", "corrected_objective_mean",
    "negative_batch_fraction", "skipped_batches", "test_accuracy",
    "accuracy_sd", "error",
)


def cmd_sweep(cfg: dict, args, out: Path) -> int:
    seed = cfg.get("seed", 0)
    if "sweep" not in cfg:
        raise ConfigurationError("sweep needs a config.sweep section")
    sw = cfg["sweep"]
    query = cfgmod.build_query(cfg)
    model = cfgmod.build_model_spec(cfg)
    base = cfgmod.build_train_config(cfg, seed)
    train_set, test_set, _ = _load_labeled_source(cfg, seed)
    jobs = args.jobs if getattr(args, "jobs", None) else sw.get("jobs", 1)
    rows = sweep(
        train_set, test_set, query, base, model,
        axis=sw["axis"], values=sw["values"], repeats=sw.get("repeats", 1), jobs=jobs,
    )

    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        fin = row.final
        lines.append(",".join([
            row.axis, str(row.value), str(row.repeat), str(row.run_seed),
            str(int(row.ok)),
            str(fin.epoch) if fin else "",
            repr(fin.raw_objective_mean) if fin else "",
            repr(fin.corrected_objective_mean) if fin else "",
            repr(fin.negative_batch_fraction) if fin else "",
            str(fin.skipped_batches) if fin else "",
            repr(fin.test_accuracy) if fin else "",
            "",
            row.error.replace(",", ";"),
        ]))
    aggregates = []
    for value in sw["values"]:
        good = [r.final for r in rows if r.value == str(value) and r.ok]
        if not good:
            continue
        accs = np.array([f.test_accuracy for f in good])
        agg = {
            "value": str(value),
            "runs": len(good),
            "test_accuracy_mean": float(accs.mean()),
            "test_accuracy_sd": float(accs.std(ddof=1)) if len(good) > 1 else 0.0,
            "negative_batch_fraction_mean": float(
                np.mean([f.negative_batch_fraction for f in good])
            ),
        }
        aggregates.append(agg)
        lines.append(",".join([
            sw["axis"], str(value), "aggregate", "", "", "", "", "",
            repr(agg["negative_batch_fraction_mean"]), "",
            repr(agg["test_accuracy_mean"]), repr(agg["test_accuracy_sd"]), "",
        ]))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "command": "sweep",
        "axis": sw["axis"],
        "values": [str(v) for v in sw["values"]],
        "repeats": sw.get("repeats", 1),
        "rows": len(rows),
        "failed_runs": sum(1 for r in rows if not r.ok),
        "aggregates": aggregates,
        "sweep_csv": "sweep.csv",
    }
    _write_json(out / "sweep_summary.json", summary)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if any(r.ok for r in rows) else EXIT_RUNTIME


def cmd_bounds(cfg: dict, args, out: Path) -> int:
    section = dict(cfg.get("bounds", {}))
    for name in ("m", "n1", "n0", "k", "n"):
        value = getattr(args, name, None)
        if value is not None:
            section[name] = value
    for flag, key in (("delta", "delta"), ("c_ell", "c_ell"), ("rho", "rho"),
                      ("c_r", "c_r"), ("kappa", "kappa"), ("zeta_f", "zeta_f"),
                      ("b_f", "b_f")):
        value = getattr(args, flag, None)
        if value is not None:
            section[key] = value
    if "m" not in section:
        raise ConfigurationError("bounds needs at least m (config.bounds.m or --m)")
    inp = BoundInputs(**section)
    report: dict = {"command": "bounds", "inputs": asdict(inp)}
    if inp.n1 >= 1:
        dev = deviation_bound(inp)
        report["deviation_bound"] = dev
        report["excess_risk_bound"] = excess_risk_bound(inp)
    if inp.k >= 2 and inp.n >= 1:
        p1_zero, p0_zero, adjusted, clamped = unconditional_adjustment(inp)
        report["unconditional"] = {
            "p_n1_zero": p1_zero,
            "p_n0_zero": p0_zero,
            "adjusted_confidence": adjusted,
            "clamped": clamped,
        }
    if inp.zeta_f > 0 and inp.n1 >= 1:
        delta_f, bias, dev_corr = corrected_bias_bound(inp)
        report["corrected"] = {
            "delta_f": delta_f,
            "bias_bound": bias,
            "deviation_bound": dev_corr,
        }
    if len(report) == 2:
        raise ConfigurationError(
            "bounds inputs select no formula: give n1/n0 for deviation bounds, "
            "k and n for the unconditional adjustment, or zeta_f for the corrected bounds"
        )
    _write_json(out / "bounds.json", report)
    cfgmod.echo_config(cfg, out)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, help="override config seed")
    sub.add_argument("--out", default="out", help="output directory (default: out)")
    sub.add_argument("--jobs", type=int, help="parallel runs (sweep only)")
    sub.add_argument("--log-level", default="warning",
                     choices=["debug", "info", "warning", "error"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subsetquery",
        description="Learning and verification for label-subset membership queries",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="generate or ingest data and weak-label it")
    _add_common(gen)
    gen.add_argument("--k", type=int)
    gen.add_argument("--m", type=int)
    gen.add_argument("--preset", choices=["desk10", "triangle3"])
    gen.add_argument("--n-train", type=int)
    gen.add_argument("--n-test", type=int)
    gen.add_argument("--sigma", type=float)

    tr = subs.add_parser("train", help="train a scorer on a weak dataset")
    _add_common(tr)
    tr.add_argument("--loss")
    tr.add_argument("--correction")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", type=int)

    ev = subs.add_parser("eval", help="evaluate a checkpoint on a labeled CSV")
    _add_common(ev)
    ev.add_argument("--checkpoint")
    ev.add_argument("--test-csv")
    ev.add_argument("--label-col", type=int)

    vf = subs.add_parser("verify", help="run the identity and unbiasedness battery")
    _add_common(vf)
    vf.add_argument("--k-min", type=int)
    vf.add_argument("--k-max", type=int)
    vf.add_argument("--joints", type=int, help="random joints per (k, m) pair")

    sw = subs.add_parser("sweep", help="train across an axis of values")
    _add_common(sw)
    sw.add_argument("--axis")
    sw.add_argument("--repeats", type=int)

    bd = subs.add_parser("bounds", help="evaluate the finite-sample bound formulas")
    _add_common(bd)
    for flag in ("--m", "--n1", "--n0", "--k", "--n"):
        bd.add_argument(flag, type=int)
    for flag in ("--delta", "--c-ell", "--rho", "--c-r", "--kappa", "--zeta-f", "--b-f"):
        bd.add_argument(flag, type=float)
    return parser


_OVERRIDE_PATHS = {
    "gen": {"k": "query.k", "m": "query.m", "preset": "mixture.preset",
            "n_train": "mixture.n_train", "n_test": "mixture.n_test",
            "sigma": "mixture.sigma"},
    "train": {"loss": "train.loss", "correction": "train.correction",
              "epochs": "train.epochs", "batch_size": "train.batch_size"},
    "eval": {"checkpoint": "eval.checkpoint", "test_csv": "eval.test_csv",
             "label_col": "eval.test_label_col"},
    "verify": {"k_min": "verify.k_min", "k_max": "verify.k_max",
               "joints": "verify.joints_per_pair"},
    "sweep": {"axis": "sweep.axis", "repeats": "sweep.repeats"},
    "bounds": {},
}

COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr)
    try:
        cfg = cfgmod.load_config(args.config) if args.config else cfgmod.default_config()
        overrides = {
            path: getattr(args, attr, None)
            for attr, path in _OVERRIDE_PATHS[args.command].items()
        }
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = cfgmod.apply_overrides(cfg, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SubsetQueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
