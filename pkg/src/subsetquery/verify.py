"""Verification battery: exact identities, simulation cross-checks, and
the Monte Carlo unbiasedness check, reported as a JSON-friendly dict.

Everything here re-derives expected values by enumeration or simulation
on small random discrete joints; nothing trusts the quantity it checks.
The battery powers the `verify` CLI command and the acceptance tests.
"""

from __future__ import annotations

from math import comb

import numpy as np

from .losses import ClasswiseLoss
from .queries import QueryConfig, membership_matrix
from .risk import (
    DiscreteJoint,
    conditional_subset_laws,
    estimate_risk,
    Correction,
    joint_recovery_residual,
    mae_conditional_mean,
    risk_identity_check,
    supervised_risk,
)
from .rng import spawn_rng

__all__ = ["run_identity_battery", "run_unbiasedness_check", "run_full_verification"]

EXACT_TOL = 1e-10
MAE_IDENTITY_TOL = 1e-12
SIGMA_TOL = 4.0

IDENTITY_NAMES = (
    "group_proportion",
    "conditional_law_normalization",
    "joint_recovery",
    "risk_identity",
    "mae_conditional_means",
    "conditional_law_simulation",
)


def _random_prob_rows(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    raw = rng.random((n, k)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


def _simulate_conditional_match(
    joint: DiscreteJoint, cfg: QueryConfig, draws: int, rng: np.random.Generator
) -> float:
    """Max per-cell z-score of simulated conditional frequencies vs the tables.

    Simulates the mechanism directly: latent pair from the joint, subset
    as a uniform index into the enumerated family, response by
    membership.  Independent of the sampler used in production code.
    """
    M, table1, table0 = conditional_subset_laws(joint, cfg)
    n_subsets = M.shape[0]
    flat_cum = np.cumsum(joint.pxy.ravel())
    flat_cum[-1] = 1.0
    pair_idx = np.searchsorted(flat_cum, rng.random(draws), side="right")
    x_idx, y_idx = np.unravel_index(pair_idx, joint.pxy.shape)
    sub_idx = rng.integers(0, n_subsets, size=draws)
    s = M[sub_idx, y_idx]

    max_z = 0.0
    cell_idx = x_idx * n_subsets + sub_idx
    n_cells = joint.n_instances * n_subsets
    for response, table in ((1, table1), (0, table0)):
        group = s if response == 1 else ~s
        n_group = int(group.sum())
        counts = np.bincount(cell_idx[group], minlength=n_cells).reshape(
            joint.n_instances, n_subsets
        )
        freq = counts / n_group
        sigma = np.sqrt(table * (1.0 - table) / n_group)
        z = np.abs(freq - table) / sigma
        max_z = max(max_z, float(z.max()))
    return max_z


def _mae_conditional_residuals(
    cfg: QueryConfig, rng: np.random.Generator, tuples: int = 4
) -> tuple[float, float]:
    """(closed-form vs enumeration residual, recovery-identity residual)."""
    M = membership_matrix(cfg).astype(float)
    k, m = cfg.k, cfg.m
    max_form, max_ident = 0.0, 0.0
    for _ in range(tuples):
        p = _random_prob_rows(1, k, rng)[0]
        y = int(rng.integers(1, k + 1))
        in_y = M[:, y - 1] == 1.0
        lbar = (2.0 - 2.0 * (M @ p) / m)
        enum_s1 = float(lbar[in_y].mean())
        enum_s0 = float(lbar[~in_y].mean())
        form_s1 = mae_conditional_mean(p, y, 1, cfg)
        form_s0 = mae_conditional_mean(p, y, 0, cfg)
        max_form = max(max_form, abs(form_s1 - enum_s1), abs(form_s0 - enum_s0))
        combined = m * form_s1 - (m - 1) * form_s0
        max_ident = max(max_ident, abs(combined - (2.0 - 2.0 * p[y - 1])))
    return max_form, max_ident


def run_identity_battery(
    k_min: int = 2,
    k_max: int = 8,
    joints_per_pair: int = 100,
    n_instances: int = 3,
    sim_draws: int = 100_000,
    seed: int = 0,
    losses: tuple[str, ...] = ("mae", "mse", "gce"),
    corrupt: str | None = None,
) -> dict:
    """Exact-identity and simulation checks over a (k, m) grid.

    For every pair and every random joint: the response-group proportion
    derived by enumeration must equal m/k, the conditional tables must
    each sum to one, the two inversion formulas must recover the joint,
    and the risk rewriting must match the supervised risk for random
    predictors under each loss, all within EXACT_TOL.  The mechanism
    simulation runs once per pair on its first joint.

    `corrupt` names an identity whose residual is inflated before
    comparison; it exists so tests can prove the battery surfaces
    failures.
    """
    loss_objs = [ClasswiseLoss(name) if isinstance(name, str) else name for name in losses]
    worst = {name: 0.0 for name in IDENTITY_NAMES}
    pairs = []
    for k in range(k_min, k_max + 1):
        for m in range(1, k):
            pairs.append((k, m))

    for pair_index, (k, m) in enumerate(pairs):
        cfg = QueryConfig.of(k, m)
        rng = spawn_rng(seed, 0, pair_index)
        count_in = np.array([comb(k - 1, m - 1)] * k, dtype=float)
        for j in range(joints_per_pair):
            joint = DiscreteJoint.random(n_instances, k, rng)
            prop = float((joint.pxy * (count_in / cfg.n_subsets)).sum())
            worst["group_proportion"] = max(worst["group_proportion"], abs(prop - m / k))

            _, table1, table0 = conditional_subset_laws(joint, cfg)
            norm_res = max(abs(table1.sum() - 1.0), abs(table0.sum() - 1.0))
            worst["conditional_law_normalization"] = max(
                worst["conditional_law_normalization"], norm_res
            )

            worst["joint_recovery"] = max(
                worst["joint_recovery"], joint_recovery_residual(joint, cfg)
            )

            probs = _random_prob_rows(n_instances, k, rng)
            for loss in loss_objs:
                _, _, res = risk_identity_check(joint, probs, loss, cfg)
                worst["risk_identity"] = max(worst["risk_identity"], res)

            if j == 0:
                form_res, ident_res = _mae_conditional_residuals(cfg, rng)
                worst["mae_conditional_means"] = max(
                    worst["mae_conditional_means"], form_res, ident_res
                )
                worst["conditional_law_simulation"] = max(
                    worst["conditional_law_simulation"],
                    _simulate_conditional_match(joint, cfg, sim_draws, rng),
                )

    if corrupt is not None:
        if corrupt not in worst:
            raise ValueError(f"unknown identity {corrupt!r}")
        worst[corrupt] += 1.0

    tolerances = {name: EXACT_TOL for name in IDENTITY_NAMES}
    tolerances["mae_conditional_means"] = MAE_IDENTITY_TOL
    tolerances["conditional_law_simulation"] = SIGMA_TOL
    identities = {
        name: {
            "max_residual": float(worst[name]),
            "tolerance": float(tolerances[name]),
            "ok": bool(worst[name] < tolerances[name]),
        }
        for name in IDENTITY_NAMES
    }
    return {
        "grid": {
            "k_min": k_min,
            "k_max": k_max,
            "joints_per_pair": joints_per_pair,
            "instances": n_instances,
            "sim_draws": sim_draws,
            "losses": [loss.spec_string() for loss in loss_objs],
            "seed": seed,
        },
        "identities": identities,
        "ok": all(entry["ok"] for entry in identities.values()),
    }


def simulate_raw_estimates(
    joint: DiscreteJoint,
    probs: np.ndarray,
    loss: ClasswiseLoss,
    cfg: QueryConfig,
    n: int,
    datasets: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Raw estimates over seeded synthetic datasets, via the production path.

    Each dataset draws n latent pairs from the joint, queries a uniform
    subset per pair, and feeds the observed subset losses and responses
    through estimate_risk.  Datasets with an empty required group are
    discarded (the conditioning event).
    """
    M = membership_matrix(cfg)
    n_subsets = M.shape[0]
    lbar = loss.value_matrix(np.asarray(probs, dtype=float)) @ M.T.astype(float) / cfg.m
    flat_cum = np.cumsum(joint.pxy.ravel())
    flat_cum[-1] = 1.0
    none = Correction.none()

    out = []
    for _ in range(datasets):
        pair_idx = np.searchsorted(flat_cum, rng.random(n), side="right")
        x_idx, y_idx = np.unravel_index(pair_idx, joint.pxy.shape)
        sub_idx = rng.integers(0, n_subsets, size=n)
        s = M[sub_idx, y_idx].astype(np.int64)
        if s.sum() < 1 or (cfg.m > 1 and s.sum() == n):
            continue
        est = estimate_risk(lbar[x_idx, sub_idx], s, cfg, none)
        out.append(est.raw)
    return np.asarray(out)


def run_unbiasedness_check(
    k: int = 6,
    m: int = 2,
    n_instances: int = 3,
    n: int = 200,
    datasets: int = 10_000,
    predictors: int = 5,
    loss: ClasswiseLoss | None = None,
    seed: int = 0,
) -> dict:
    """Monte Carlo mean of the raw estimator versus the oracle risk.

    For each fixed predictor the mean over datasets must sit within
    SIGMA_TOL standard errors of the exact supervised risk.
    """
    loss = loss or ClasswiseLoss("mae")
    cfg = QueryConfig.of(k, m)
    rng = spawn_rng(seed, 1)
    joint = DiscreteJoint.random(n_instances, k, rng)
    rows = []
    for i in range(predictors):
        probs = _random_prob_rows(n_instances, k, rng)
        oracle = supervised_risk(joint, probs, loss)
        raws = simulate_raw_estimates(joint, probs, loss, cfg, n, datasets, rng)
        se = float(raws.std(ddof=1) / np.sqrt(raws.size))
        z = abs(float(raws.mean()) - oracle) / se
        rows.append(
            {
                "predictor": i,
                "oracle_risk": float(oracle),
                "mc_mean": float(raws.mean()),
                "mc_se": se,
                "z": float(z),
                "datasets": int(raws.size),
                "ok": bool(z < SIGMA_TOL),
            }
        )
    return {
        "setup": {
            "k": k,
            "m": m,
            "instances": n_instances,
            "n": n,
            "datasets": datasets,
            "loss": loss.spec_string(),
            "seed": seed,
        },
        "predictors": rows,
        "max_z": float(max(r["z"] for r in rows)),
        "tolerance": SIGMA_TOL,
        "ok": all(r["ok"] for r in rows),
    }


def run_full_verification(
    k_min: int = 2,
    k_max: int = 8,
    joints_per_pair: int = 100,
    sim_draws: int = 100_000,
    mc_datasets: int = 10_000,
    seed: int = 0,
    corrupt: str | None = None,
) -> dict:
    """Identity battery plus the unbiasedness check, one combined report."""
    identities = run_identity_battery(
        k_min=k_min,
        k_max=k_max,
        joints_per_pair=joints_per_pair,
        sim_draws=sim_draws,
        seed=seed,
        corrupt=corrupt,
    )
    unbiased = run_unbiasedness_check(datasets=mc_datasets, seed=seed)
    return {
        "identity_suite": identities,
        "unbiasedness": unbiased,
        "ok": identities["ok"] and unbiased["ok"],
    }
