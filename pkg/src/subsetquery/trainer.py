"""Minibatch training against the corrected query-response objective.

Each minibatch forms the weighted difference of its two response-group
mean losses, applies the scalar correction, and backpropagates the
correction slope through the groupwise weights.  True labels never enter
the gradient path: the training set type carries no label field, and the
labeled eval set is used for accuracy reporting only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .data import LabeledDataset, QueryResponseDataset, weakify
from .errors import ConfigurationError, TrainingError
from .losses import ClasswiseLoss, parse_loss
from .model import GradientBuffer, Scorer, backward, forward, init_scorer, predict_labels
from .queries import QueryConfig
from .risk import Correction, apply_correction, correction_slope, parse_correction
from .rng import derive_seed, make_rng, spawn_rng

__all__ = [
    "TrainConfig",
    "EpochMetrics",
    "ModelSpec",
    "batch_gradient",
    "train",
    "evaluate",
    "sweep",
    "SweepRow",
    "SWEEP_AXES",
    "metrics_csv_lines",
    "stepped_lr",
]

SWEEP_AXES = ("m", "batch_size", "correction", "loss")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    loss: ClasswiseLoss
    correction: Correction
    seed: int
    momentum: float = 0.0
    weight_decay: float = 0.0
    lr_decay_epochs: int = 0  # 0 disables the step schedule
    lr_decay_factor: float = 1.0
    empty_group_policy: str = "skip"  # "skip" | "single_term"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ConfigurationError("learning_rate must be positive and finite")
        if not (0 <= self.momentum < 1):
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.lr_decay_epochs < 0 or self.lr_decay_factor <= 0:
            raise ConfigurationError("invalid lr decay schedule")
        if self.empty_group_policy not in ("skip", "single_term"):
            raise ConfigurationError(f"unknown empty_group_policy {self.empty_group_policy!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture selector used when a run constructs its own scorer."""

    architecture: str = "linear"
    hidden_width: int = 0


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    raw_objective_mean: float
    corrected_objective_mean: float
    negative_batch_fraction: float
    skipped_batches: int
    test_accuracy: float
    train_time_ms: int


# Columns of the per-epoch metrics CSV.  train_time_ms is deliberately not
# written: command outputs must be byte-identical across reruns.
METRICS_COLUMNS = (
    "epoch",
    "raw_objective_mean",
    "corrected_objective_mean",
    "negative_batch_fraction",
    "skipped_batches",
    "test_accuracy",
)


def metrics_csv_lines(metrics: list[EpochMetrics]) -> list[str]:
    lines = [",".join(METRICS_COLUMNS)]
    for em in metrics:
        lines.append(
            ",".join(
                [
                    str(em.epoch),
                    repr(em.raw_objective_mean),
                    repr(em.corrected_objective_mean),
                    repr(em.negative_batch_fraction),
                    str(em.skipped_batches),
                    repr(em.test_accuracy),
                ]
            )
        )
    return lines


def stepped_lr(initial: float, step_epochs: int, factor: float, epoch: int) -> float:
    """Learning rate at an epoch under the step schedule.

    Each decay multiplies the previous rate by factor exactly; epochs
    before the first step see the initial rate unchanged.
    """
    lr = initial
    if step_epochs > 0:
        for _ in range(epoch // step_epochs):
            lr *= factor
    return lr


def evaluate(scorer: Scorer, eval_set: LabeledDataset) -> float:
    """Fraction of instances whose argmax prediction matches the label.

    Argmax ties resolve to the smallest label index.
    """
    if eval_set.n < 1:
        raise TrainingError("eval set must be nonempty")
    pred = predict_labels(scorer, eval_set.features)
    return float(np.mean(pred == eval_set.labels))


def _batch_objective(
    lbar: np.ndarray,
    s: np.ndarray,
    m: int,
    correction: Correction,
    policy: str,
) -> tuple[float, float, np.ndarray] | None:
    """Raw and corrected objective plus per-sample weights for one batch.

    Returns None when the batch must be skipped (empty required group
    under "skip", or nothing usable at all).
    """
    n1 = int((s == 1).sum())
    n0 = int(s.size - n1)
    w = np.zeros(s.size)
    usable_1 = n1 >= 1
    usable_0 = n0 >= 1 and m > 1
    if usable_1 and (usable_0 or m == 1):
        raw = m * float(lbar[s == 1].mean())
        if m > 1:
            raw -= (m - 1) * float(lbar[s == 0].mean())
        w[s == 1] = m / n1
        if m > 1:
            w[s == 0] = -(m - 1) / n0
    elif policy == "single_term" and (usable_1 or usable_0):
        if usable_1:
            raw = m * float(lbar[s == 1].mean())
            w[s == 1] = m / n1
        else:
            raw = -(m - 1) * float(lbar[s == 0].mean())
            w[s == 0] = -(m - 1) / n0
    else:
        return None
    return raw, apply_correction(raw, correction), w


def batch_gradient(
    scorer: Scorer,
    X: np.ndarray,
    mask: np.ndarray,
    s: np.ndarray,
    m: int,
    loss: ClasswiseLoss,
    correction: Correction,
    policy: str = "skip",
) -> tuple[float, float, GradientBuffer] | None:
    """Corrected objective and its exact parameter gradient for one batch.

    The raw objective distributes weight m/n1 over s=1 samples and
    -(m-1)/n0 over s=0 samples; the correction contributes its slope as a
    scalar factor.  Returns None when the batch is unusable under the
    empty-group policy.
    """
    _, P, cache = forward(scorer, X)
    lbar = loss.subset_value_batch(P, mask)
    out = _batch_objective(lbar, s, m, correction, policy)
    if out is None:
        return None
    raw, corrected, w = out
    slope = correction_slope(raw, correction)
    dP = (slope * w)[:, None] * loss.subset_grad_batch(P, mask)
    return raw, corrected, backward(scorer, cache, dP)


def train(
    scorer: Scorer,
    dataset: QueryResponseDataset,
    cfg: TrainConfig,
    eval_set: LabeledDataset,
    batch_log: list | None = None,
) -> tuple[Scorer, list[EpochMetrics]]:
    """SGD with momentum on the corrected groupwise objective.

    Deterministic under cfg.seed for fixed inputs.  When batch_log is a
    list, (epoch, raw, corrected) is appended for every processed batch.
    """
    m = dataset.provenance.m
    if cfg.batch_size < 2 and m != 1:
        raise ConfigurationError("batch_size must be >= 2 when m > 1")
    if dataset.n < 1:
        raise TrainingError("training set is empty")

    X = dataset.features.astype(float)
    mask = dataset.subset_mask()
    s_all = dataset.responses.astype(np.int64)
    rng = make_rng(cfg.seed)
    velocity = GradientBuffer.zeros_like(scorer)
    metrics: list[EpochMetrics] = []

    for epoch in range(cfg.epochs):
        lr = stepped_lr(cfg.learning_rate, cfg.lr_decay_epochs, cfg.lr_decay_factor, epoch)
        t0 = time.perf_counter()
        order = rng.permutation(dataset.n)
        raws: list[float] = []
        correcteds: list[float] = []
        negative = 0
        skipped = 0
        for start in range(0, dataset.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            out = batch_gradient(
                scorer, X[idx], mask[idx], s_all[idx], m,
                cfg.loss, cfg.correction, cfg.empty_group_policy,
            )
            if out is None:
                skipped += 1
                continue
            raw, corrected, grads = out
            raws.append(raw)
            correcteds.append(corrected)
            if raw < 0:
                negative += 1
            if batch_log is not None:
                batch_log.append((epoch, raw, corrected))
            for name, p in scorer.params.items():
                g = grads.grads[name]
                if cfg.weight_decay > 0:
                    g = g + cfg.weight_decay * p
                velocity.grads[name] = cfg.momentum * velocity.grads[name] + g
                p -= lr * velocity.grads[name]
        if not raws:
            raise TrainingError(
                f"epoch {epoch}: no usable minibatch (all {skipped} skipped)"
            )
        elapsed_ms = int(round((time.perf_counter() - t0) * 1000))
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                raw_objective_mean=float(np.mean(raws)),
                corrected_objective_mean=float(np.mean(correcteds)),
                negative_batch_fraction=negative / len(raws),
                skipped_batches=skipped,
                test_accuracy=evaluate(scorer, eval_set),
                train_time_ms=elapsed_ms,
            )
        )
    return scorer, metrics


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: str
    repeat: int
    run_seed: int
    ok: bool
    final: EpochMetrics | None = None
    error: str = ""


def _apply_axis(
    axis: str, value, cfg: QueryConfig, base: TrainConfig
) -> tuple[QueryConfig, TrainConfig]:
    if axis == "m":
        return QueryConfig.of(cfg.k, int(value)), base
    if axis == "batch_size":
        return cfg, replace(base, batch_size=int(value))
    if axis == "correction":
        corr = value if isinstance(value, Correction) else parse_correction(str(value))
        return cfg, replace(base, correction=corr)
    if axis == "loss":
        loss = value if isinstance(value, ClasswiseLoss) else parse_loss(str(value))
        return cfg, replace(base, loss=loss)
    raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def _run_sweep_cell(args) -> SweepRow:
    (axis, value, repeat, train_data, test_data, cfg, base, model) = args
    init_seed = derive_seed(base.seed, 3, repeat)
    shuffle_seed = derive_seed(base.seed, 2, repeat)
    try:
        run_cfg, run_train = _apply_axis(axis, value, cfg, base)
        # Data and init pair across axis values: only a run with a
        # different m re-weakifies differently, and only through the
        # mechanism itself.
        weak_seed = derive_seed(base.seed, 1, repeat, run_cfg.m)
        run_train = replace(run_train, seed=shuffle_seed)
        weak = weakify(train_data, run_cfg, weak_seed, source_id=f"sweep-{axis}-{value}")
        scorer = init_scorer(
            model.architecture,
            train_data.d,
            train_data.k,
            spawn_rng(init_seed, 0),
            hidden_width=model.hidden_width,
        )
        _, metrics = train(scorer, weak, run_train, test_data)
        return SweepRow(axis, str(value), repeat, shuffle_seed, True, metrics[-1])
    except Exception as exc:  # noqa: BLE001  (per-run failures are recorded, not fatal)
        return SweepRow(axis, str(value), repeat, shuffle_seed, False, None, f"{type(exc).__name__}: {exc}")


def sweep(
    train_data: LabeledDataset,
    test_data: LabeledDataset,
    cfg: QueryConfig,
    base: TrainConfig,
    model: ModelSpec,
    axis: str,
    values: list,
    repeats: int = 1,
    jobs: int = 1,
) -> list[SweepRow]:
    """Train once per (axis value, repeat) with paired derived seeds.

    Repeats share source data, weak-labeling seed (per m), model init and
    shuffle order across axis values, so value comparisons are paired.
    Per-run failures are recorded in their row; remaining runs continue.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if not values:
        raise ConfigurationError("sweep needs at least one axis value")
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    cells = [
        (axis, value, repeat, train_data, test_data, cfg, base, model)
        for value in values
        for repeat in range(repeats)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_sweep_cell, cells))
    else:
        rows = [_run_sweep_cell(c) for c in cells]
    return rows
