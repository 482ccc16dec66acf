"""Closed-form finite-sample bound formulas and their Monte Carlo check.

Three families are evaluated, all as plain formulas of user-supplied
constants:

  * a conditional uniform-deviation bound on the raw groupwise estimator
    and its doubled excess-risk form, both driven by the response-group
    sizes n1 and n0;
  * the unconditional adjustment that discounts the confidence level by
    the probabilities of an empty response group;
  * the bias and deviation bounds for the corrected estimator at a fixed
    predictor, governed by an exponential factor delta_f.

The complexity constants (rho, C_R, B_F) are inputs with default 1.0;
nothing here estimates them from data.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, log, sqrt

import numpy as np

from .errors import ConfigurationError, DomainError
from .losses import ClasswiseLoss
from .queries import QueryConfig, membership_matrix
from .risk import Correction, DiscreteJoint, supervised_risk

__all__ = [
    "BoundInputs",
    "deviation_bound",
    "excess_risk_bound",
    "unconditional_adjustment",
    "corrected_bias_bound",
    "BiasCheckReport",
    "empirical_bias_check",
]


@dataclass(frozen=True)
class BoundInputs:
    """Constants the bound formulas consume.

    c_ell is the loss bound, rho the loss Lipschitz constant, c_r the
    complexity-growth constant, kappa the correction parameter, zeta_f a
    positive lower bound on the predictor's risk, b_f the score bound
    (recorded for documentation; no formula here uses it).
    """

    m: int
    n1: int = 0
    n0: int = 0
    k: int = 0
    n: int = 0
    delta: float = 0.05
    c_ell: float = 2.0
    rho: float = 1.0
    c_r: float = 1.0
    kappa: float = 0.0
    zeta_f: float = 0.0
    b_f: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if self.n and self.n1 and self.n0 and self.n1 + self.n0 != self.n:
            raise ConfigurationError("n1 + n0 must equal n when all three are supplied")
        for name in ("c_ell", "rho", "c_r"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.kappa < 0:
            raise ConfigurationError("kappa must be >= 0")


def _check_conditional(inp: BoundInputs) -> None:
    if not (0 < inp.delta < 1):
        raise ConfigurationError(f"delta must be in (0, 1), got {inp.delta}")
    if inp.n1 < 1:
        raise ConfigurationError("conditional bounds need n1 >= 1")
    if inp.m > 1 and inp.n0 < 1:
        raise ConfigurationError("conditional bounds need n0 >= 1 when m > 1")


def _group_term(inp: BoundInputs, n_group: int) -> float:
    return 2.0 * inp.rho * inp.c_r / sqrt(n_group) + inp.c_ell * sqrt(
        log(4.0 / inp.delta) / (2.0 * n_group)
    )


def deviation_bound(inp: BoundInputs) -> float:
    """Conditional uniform-deviation bound on the raw estimator.

        m * (2 rho C_R / sqrt(n1) + C_l sqrt(log(4/delta) / (2 n1)))
      + (m-1) * (same with n0)
    """
    _check_conditional(inp)
    total = inp.m * _group_term(inp, inp.n1)
    if inp.m > 1:
        total += (inp.m - 1) * _group_term(inp, inp.n0)
    return total


def excess_risk_bound(inp: BoundInputs) -> float:
    """Excess-risk form: term-by-term double of the deviation bound."""
    return 2.0 * deviation_bound(inp)


def unconditional_adjustment(inp: BoundInputs) -> tuple[float, float, float, bool]:
    """Empty-group tail probabilities and the adjusted confidence level.

    Returns (P(n1=0), P(n0=0), adjusted, clamped) with
    P(n1=0) = (1 - m/k)^n, P(n0=0) = (m/k)^n and
    adjusted = 1 - delta - P(n1=0) - P(n0=0), clamped into [0, 1] with a
    flag when the raw value was negative (tiny n makes the formula
    vacuous, not invalid).
    """
    if inp.n < 1:
        raise ConfigurationError("unconditional adjustment needs n >= 1")
    if not (0 < inp.delta < 1):
        raise ConfigurationError(f"delta must be in (0, 1), got {inp.delta}")
    if not (1 <= inp.m <= inp.k - 1):
        raise ConfigurationError(f"need 1 <= m <= k-1, got m={inp.m}, k={inp.k}")
    # (k-m)/k rather than 1 - m/k: algebraically identical, and it makes
    # the m <-> k-m swap exchange the two tails bit-exactly
    p1_zero = ((inp.k - inp.m) / inp.k) ** inp.n
    p0_zero = (inp.m / inp.k) ** inp.n
    adjusted = 1.0 - inp.delta - p1_zero - p0_zero
    clamped = adjusted < 0.0
    return p1_zero, p0_zero, min(max(adjusted, 0.0), 1.0), clamped


def _variance_factor(inp: BoundInputs) -> float:
    v = inp.m**2 / inp.n1
    if inp.m > 1:
        v += (inp.m - 1) ** 2 / inp.n0
    return v


def corrected_bias_bound(inp: BoundInputs) -> tuple[float, float, float]:
    """Bias and deviation bounds for the corrected estimator at a fixed predictor.

    Returns (delta_f, bias_bound, deviation_bound) with

        delta_f   = exp(-2 zeta_f^2 / (C_l^2 (m^2/n1 + (m-1)^2/n0)))
        bias      = (kappa+1) (2m-1) C_l delta_f
        deviation = max(1, kappa) C_l sqrt(log(2/delta)/2 * (m^2/n1 + (m-1)^2/n0))
                    + bias

    Requires a risk floor zeta_f > 0; the bias decays exponentially in
    the group sizes because correction only activates when the raw
    estimate crosses below zero.
    """
    _check_conditional(inp)
    if inp.zeta_f <= 0:
        raise ConfigurationError("corrected bias bound needs zeta_f > 0")
    v = _variance_factor(inp)
    delta_f = exp(-2.0 * inp.zeta_f**2 / (inp.c_ell**2 * v))
    bias = (inp.kappa + 1.0) * (2 * inp.m - 1) * inp.c_ell * delta_f
    deviation = max(1.0, inp.kappa) * inp.c_ell * sqrt(0.5 * log(2.0 / inp.delta) * v) + bias
    return delta_f, bias, deviation


# ---------------------------------------------------------------------------
# Monte Carlo check of the bias bound


@dataclass(frozen=True)
class BiasCheckReport:
    oracle_risk: float
    mean_corrected: float
    measured_bias: float
    bias_bound: float
    mc_standard_error: float
    valid_trials: int
    ok: bool


def empirical_bias_check(
    joint: DiscreteJoint,
    probs: np.ndarray,
    loss: ClasswiseLoss,
    cfg: QueryConfig,
    correction: Correction,
    n: int,
    trials: int,
    rng: np.random.Generator,
) -> BiasCheckReport:
    """Simulated bias of the corrected estimator versus its bound.

    Draws `trials` datasets of size n from the joint through the query
    mechanism, keeps those with both response groups nonempty (that is
    the conditioning), averages the corrected estimate, and compares the
    gap to the oracle risk against the bias bound averaged over the
    realized group sizes, at zeta_f equal to the true risk.
    """
    if trials < 1000:
        raise ConfigurationError("empirical bias check needs trials >= 1000")
    risk = supervised_risk(joint, probs, loss)
    if risk <= 0:
        raise DomainError("bias check needs a predictor with strictly positive risk")

    M = membership_matrix(cfg)
    n_subsets = M.shape[0]
    lbar = loss.value_matrix(np.asarray(probs, dtype=float)) @ M.T.astype(float) / cfg.m
    flat = joint.pxy.ravel()
    cum = np.cumsum(flat)
    cum[-1] = 1.0

    draws = rng.random((trials, n))
    pair_idx = np.searchsorted(cum, draws, side="right")
    x_idx, y_idx = np.unravel_index(pair_idx, joint.pxy.shape)
    sub_idx = rng.integers(0, n_subsets, size=(trials, n))
    in_subset = M[sub_idx, y_idx]
    values = lbar[x_idx, sub_idx]

    n1 = in_subset.sum(axis=1)
    n0 = n - n1
    valid = (n1 >= 1) & ((n0 >= 1) | (cfg.m == 1))
    n1v, n0v = n1[valid], n0[valid]
    vals, inv = values[valid], in_subset[valid]
    sum1 = (vals * inv).sum(axis=1)
    raw = cfg.m * sum1 / n1v
    if cfg.m > 1:
        sum0 = (vals * ~inv).sum(axis=1)
        raw -= (cfg.m - 1) * sum0 / n0v
    if correction.mode == "none":
        corrected = raw
    else:
        corrected = np.where(raw >= 0, raw, correction.kappa * np.abs(raw))

    valid_trials = int(valid.sum())
    if valid_trials == 0:
        raise DomainError("no simulated dataset had both response groups nonempty")
    mean_corrected = float(corrected.mean())
    measured = abs(mean_corrected - risk)
    v = cfg.m**2 / n1v + (0 if cfg.m == 1 else (cfg.m - 1) ** 2 / n0v)
    delta_f = np.exp(-2.0 * risk**2 / (loss.bound**2 * v))
    bound = float(((correction.kappa + 1.0) * (2 * cfg.m - 1) * loss.bound * delta_f).mean())
    se = float(corrected.std(ddof=1) / np.sqrt(valid_trials))
    return BiasCheckReport(
        oracle_risk=risk,
        mean_corrected=mean_corrected,
        measured_bias=measured,
        bias_bound=bound,
        mc_standard_error=se,
        valid_trials=valid_trials,
        ok=measured <= bound + 4.0 * se,
    )
