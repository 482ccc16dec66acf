"""Run configuration: versioned JSON schema, strict validation, overrides.

A config is a nested JSON document validated before any work happens:
unknown keys are rejected, the version is pinned, and every value is
type- and range-checked here rather than deep in a run.  Command-line
flags override individual fields after the file loads; the merged result
is echoed into the output directory for provenance.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import GaussianMixtureSpec, desk_mixture_spec, orthonormal_means, triangle_mixture_spec
from .errors import ConfigurationError
from .losses import parse_loss
from .queries import QueryConfig
from .risk import parse_correction
from .trainer import SWEEP_AXES, ModelSpec, TrainConfig

__all__ = [
    "CONFIG_VERSION",
    "default_config",
    "load_config",
    "validate_config",
    "apply_overrides",
    "echo_config",
    "build_query",
    "build_mixture",
    "build_train_config",
    "build_model_spec",
]

CONFIG_VERSION = 1

_PRESETS = {"desk10", "triangle3"}


def default_config() -> dict:
    return {"version": CONFIG_VERSION, "seed": 0}


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) {sorted(unknown)} in {path}")


def _need(section: dict, key: str, kinds, path: str):
    if key not in section:
        raise ConfigurationError(f"missing required key {key!r} in {path}")
    return _typed(section, key, kinds, path)


def _typed(section: dict, key: str, kind, path: str):
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (isinstance(value, bool) and kind is not bool):
        raise ConfigurationError(f"{path}.{key} has wrong type {type(value).__name__}")
    return value


def validate_config(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be an object")
    _check_keys(
        doc,
        {"version", "seed", "query", "mixture", "source", "data", "model", "train",
         "sweep", "verify", "bounds", "eval"},
        "config",
    )
    if _need(doc, "version", int, "config") != CONFIG_VERSION:
        raise ConfigurationError(
            f"config version {doc['version']} unsupported; this build reads version {CONFIG_VERSION}"
        )
    if "seed" in doc:
        seed = _typed(doc, "seed", int, "config")
        if not (0 <= seed < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    if "query" in doc:
        q = _typed(doc, "query", dict, "config")
        _check_keys(q, {"k", "m"}, "config.query")
        _need(q, "k", int, "config.query")
        _need(q, "m", int, "config.query")

    if "mixture" in doc:
        mix = _typed(doc, "mixture", dict, "config")
        _check_keys(
            mix,
            {"preset", "k", "d", "sigma", "n_train", "n_test", "means",
             "means_seed", "means_radius", "priors"},
            "config.mixture",
        )
        if "preset" in mix:
            preset = _typed(mix, "preset", str, "config.mixture")
            if preset not in _PRESETS:
                raise ConfigurationError(f"unknown mixture preset {preset!r}; options {sorted(_PRESETS)}")
        else:
            for key in ("k", "d", "n_train", "n_test"):
                _need(mix, key, int, "config.mixture")
            _need(mix, "sigma", float, "config.mixture")
            if "means" in mix:
                _typed(mix, "means", list, "config.mixture")
            elif "means_seed" not in mix:
                raise ConfigurationError("config.mixture needs either means or means_seed")

    if "source" in doc:
        src = _typed(doc, "source", dict, "config")
        _check_keys(
            src,
            {"type", "images", "labels", "test_images", "test_labels", "path",
             "test_path", "label_col", "k", "delimiter", "n_test"},
            "config.source",
        )
        kind = _need(src, "type", str, "config.source")
        if kind == "idx":
            _need(src, "images", str, "config.source")
            _need(src, "labels", str, "config.source")
        elif kind == "csv":
            _need(src, "path", str, "config.source")
            _need(src, "k", int, "config.source")
        else:
            raise ConfigurationError(f"unknown source type {kind!r}; options idx, csv")

    if "data" in doc:
        data = _typed(doc, "data", dict, "config")
        _check_keys(data, {"weak", "test_csv", "test_label_col", "test_k"}, "config.data")
        _need(data, "weak", str, "config.data")
        _need(data, "test_csv", str, "config.data")

    if "model" in doc:
        model = _typed(doc, "model", dict, "config")
        _check_keys(model, {"architecture", "hidden_width"}, "config.model")
        arch = _need(model, "architecture", str, "config.model")
        if arch not in ("linear", "mlp"):
            raise ConfigurationError(f"unknown architecture {arch!r}")
        if arch == "mlp":
            _need(model, "hidden_width", int, "config.model")

    if "train" in doc:
        tr = _typed(doc, "train", dict, "config")
        _check_keys(
            tr,
            {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
             "lr_decay_epochs", "lr_decay_factor", "loss", "correction",
             "empty_group_policy"},
            "config.train",
        )
        _need(tr, "epochs", int, "config.train")
        _need(tr, "batch_size", int, "config.train")
        _need(tr, "learning_rate", float, "config.train")
        if "loss" in tr:
            parse_loss(_typed(tr, "loss", str, "config.train"))
        if "correction" in tr:
            parse_correction(_typed(tr, "correction", str, "config.train"))

    if "sweep" in doc:
        sw = _typed(doc, "sweep", dict, "config")
        _check_keys(sw, {"axis", "values", "repeats", "jobs"}, "config.sweep")
        axis = _need(sw, "axis", str, "config.sweep")
        if axis not in SWEEP_AXES:
            raise ConfigurationError(f"unknown sweep axis {axis!r}; options {SWEEP_AXES}")
        values = _need(sw, "values", list, "config.sweep")
        if not values:
            raise ConfigurationError("config.sweep.values must be nonempty")

    if "verify" in doc:
        ver = _typed(doc, "verify", dict, "config")
        _check_keys(
            ver,
            {"k_min", "k_max", "joints_per_pair", "sim_draws", "mc_datasets"},
            "config.verify",
        )

    if "bounds" in doc:
        b = _typed(doc, "bounds", dict, "config")
        _check_keys(
            b,
            {"m", "n1", "n0", "k", "n", "delta", "c_ell", "rho", "c_r", "kappa",
             "zeta_f", "b_f"},
            "config.bounds",
        )

    if "eval" in doc:
        ev = _typed(doc, "eval", dict, "config")
        _check_keys(ev, {"checkpoint", "test_csv", "test_label_col", "test_k"}, "config.eval")
        _need(ev, "checkpoint", str, "config.eval")
        _need(ev, "test_csv", str, "config.eval")

    return doc


def load_config(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return validate_config(doc)


def apply_overrides(cfg: dict, overrides: dict[str, object]) -> dict:
    """Apply dotted-path overrides like {"query.k": 10}; None values skip."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return validate_config(cfg)


def echo_config(cfg: dict, out_dir: Path) -> None:
    """Write the effective merged config for provenance.

    Output-directory location is runtime context, not configuration, so
    it never appears in the echoed document.
    """
    (out_dir / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# builders from a validated config


def build_query(cfg: dict) -> QueryConfig:
    if "query" not in cfg:
        raise ConfigurationError("this command needs a config.query section (k, m)")
    return QueryConfig.of(cfg["query"]["k"], cfg["query"]["m"])


def build_mixture(cfg: dict) -> GaussianMixtureSpec:
    if "mixture" not in cfg:
        raise ConfigurationError("this command needs a config.mixture section")
    mix = cfg["mixture"]
    if "preset" in mix:
        base = desk_mixture_spec() if mix["preset"] == "desk10" else triangle_mixture_spec()
        n_train = mix.get("n_train", base.n_train)
        n_test = mix.get("n_test", base.n_test)
        sigma = mix.get("sigma", base.sigma)
        return GaussianMixtureSpec(
            k=base.k, d=base.d, means=base.means, sigma=sigma,
            class_priors=base.class_priors, n_train=n_train, n_test=n_test,
        )
    k, d = mix["k"], mix["d"]
    if "means" in mix:
        means = np.asarray(mix["means"], dtype=float)
    else:
        means = orthonormal_means(k, d, mix["means_seed"], mix.get("means_radius", 1.0))
    priors = np.asarray(mix["priors"], dtype=float) if "priors" in mix and mix["priors"] else np.full(k, 1.0 / k)
    return GaussianMixtureSpec(
        k=k, d=d, means=means, sigma=mix["sigma"], class_priors=priors,
        n_train=mix["n_train"], n_test=mix["n_test"],
    )


def build_train_config(cfg: dict, seed: int) -> TrainConfig:
    if "train" not in cfg:
        raise ConfigurationError("this command needs a config.train section")
    tr = cfg["train"]
    return TrainConfig(
        epochs=tr["epochs"],
        batch_size=tr["batch_size"],
        learning_rate=float(tr["learning_rate"]),
        loss=parse_loss(tr.get("loss", "mae")),
        correction=parse_correction(tr.get("correction", "none")),
        seed=seed,
        momentum=float(tr.get("momentum", 0.0)),
        weight_decay=float(tr.get("weight_decay", 0.0)),
        lr_decay_epochs=tr.get("lr_decay_epochs", 0),
        lr_decay_factor=float(tr.get("lr_decay_factor", 1.0)),
        empty_group_policy=tr.get("empty_group_policy", "skip"),
    )


def build_model_spec(cfg: dict) -> ModelSpec:
    model = cfg.get("model", {"architecture": "linear"})
    return ModelSpec(
        architecture=model.get("architecture", "linear"),
        hidden_width=model.get("hidden_width", 0),
    )
