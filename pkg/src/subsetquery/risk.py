"""Risk estimation from query-response samples, scalar corrections, and
exact population oracles on finite discrete instance spaces.

The raw estimator is a weighted difference of the two response-group
sample means of the subset-average loss,

    raw = m * mean(lbar | s=1) - (m-1) * mean(lbar | s=0),

whose population value equals the supervised risk under the uniform query
mechanism.  Being a difference of means it can go negative in finite
samples; the correction family

    phi(z) = z          for z >= 0
    phi(z) = kappa*|z|  for z <  0,   kappa >= 0

truncates (kappa=0) or reflects (kappa=1) the negative region without
changing the population target.

The oracle half of the module re-derives every distributional identity by
exhaustive enumeration on a small discrete joint, independently of the
sampling code, so the estimator can be checked against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ConfigurationError, DomainError, EmptyResponseGroupError
from .losses import ClasswiseLoss
from .queries import QueryConfig, membership_matrix

__all__ = [
    "Correction",
    "parse_correction",
    "apply_correction",
    "correction_slope",
    "RiskEstimate",
    "groupwise_means",
    "estimate_risk",
    "DiscreteJoint",
    "supervised_risk",
    "conditional_subset_laws",
    "joint_recovery_residual",
    "risk_identity_check",
    "mae_conditional_mean",
]

JOINT_MASS_TOL = 1e-12


# ---------------------------------------------------------------------------
# corrections


@dataclass(frozen=True)
class Correction:
    """Scalar correction phi applied to the raw estimate.

    mode "none" is the identity everywhere (the uncorrected estimator);
    "nn" truncates the negative region (kappa=0), "abs" reflects it
    (kappa=1), "kappa" uses an arbitrary kappa >= 0.
    """

    mode: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "nn", "abs", "kappa"):
            raise ConfigurationError(f"unknown correction mode {self.mode!r}")
        if self.kappa < 0:
            raise ConfigurationError(f"kappa must be >= 0, got {self.kappa}")

    @staticmethod
    def none() -> "Correction":
        return Correction("none")

    @staticmethod
    def nn() -> "Correction":
        return Correction("nn", 0.0)

    @staticmethod
    def absolute() -> "Correction":
        return Correction("abs", 1.0)

    @staticmethod
    def with_kappa(kappa: float) -> "Correction":
        return Correction("kappa", kappa)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of phi: max(1, kappa)."""
        if self.mode == "none":
            return 1.0
        return max(1.0, self.kappa)

    def spec_string(self) -> str:
        if self.mode == "kappa":
            return f"kappa:{self.kappa!r}"
        return self.mode


def parse_correction(text: str) -> Correction:
    """Parse a correction selector: "none", "nn", "abs", or "kappa:<v>"."""
    text = text.strip().lower()
    if text == "none":
        return Correction.none()
    if text == "nn":
        return Correction.nn()
    if text == "abs":
        return Correction.absolute()
    if text.startswith("kappa:"):
        return Correction.with_kappa(float(text[6:]))
    raise ConfigurationError(f"unknown correction selector {text!r}")


def apply_correction(z: float, correction: Correction) -> float:
    """phi(z): identity on z >= 0, kappa*|z| on z < 0 ("none" passes z through)."""
    if correction.mode == "none" or z >= 0:
        return float(z)
    return float(correction.kappa * abs(z))


def correction_slope(z: float, correction: Correction) -> float:
    """d phi / d z, with the z=0 tie broken toward the identity branch (slope 1)."""
    if correction.mode == "none" or z >= 0:
        return 1.0
    return -correction.kappa


# ---------------------------------------------------------------------------
# empirical estimator


@dataclass(frozen=True)
class RiskEstimate:
    """Groupwise means, the raw weighted-difference estimate, and its correction.

    ``correction_active`` flags the negative region raw < 0 where phi
    deviates from the identity (for mode "none" it still flags
    negativity, though nothing is corrected there).
    """

    r1_mean: float
    r0_mean: float
    n1: int
    n0: int
    raw: float
    corrected: float
    correction_active: bool


def groupwise_means(values: np.ndarray, responses: np.ndarray) -> tuple[float, float, int, int]:
    """Sample means of the subset-average loss per response group.

    Returns (r1_mean, r0_mean, n1, n0); an empty group's mean is NaN, the
    undefined marker.  Empty groups are reported, not raised.
    """
    values = np.asarray(values, dtype=float)
    responses = np.asarray(responses)
    if values.shape != responses.shape or values.ndim != 1:
        raise DomainError("values and responses must be matching 1-d sequences")
    if values.size == 0:
        raise DomainError("groupwise means need at least one sample")
    pos = responses == 1
    n1 = int(pos.sum())
    n0 = int(values.size - n1)
    r1 = float(values[pos].mean()) if n1 else float("nan")
    r0 = float(values[~pos].mean()) if n0 else float("nan")
    return r1, r0, n1, n0


def estimate_risk(
    values: np.ndarray,
    responses: np.ndarray,
    cfg: QueryConfig,
    correction: Correction,
) -> RiskEstimate:
    """Weighted-difference estimate of the supervised risk, then phi.

    Requires n1 >= 1, and n0 >= 1 unless m = 1 (the s=0 term carries
    weight m-1 = 0 there, so an empty s=0 group is harmless).  Raises
    EmptyResponseGroupError otherwise; callers decide the policy.
    """
    r1, r0, n1, n0 = groupwise_means(values, responses)
    m = cfg.m
    if n1 < 1 or (n0 < 1 and m > 1):
        raise EmptyResponseGroupError(n1, n0)
    raw = m * r1 if m == 1 else m * r1 - (m - 1) * r0
    corrected = apply_correction(raw, correction)
    return RiskEstimate(
        r1_mean=r1,
        r0_mean=r0,
        n1=n1,
        n0=n0,
        raw=float(raw),
        corrected=corrected,
        correction_active=raw < 0,
    )


# ---------------------------------------------------------------------------
# population oracles on a finite discrete joint


@dataclass(frozen=True)
class DiscreteJoint:
    """A finite joint distribution p(x, y): rows are instances, columns labels.

    Used only by the verification oracles; nothing in training touches it.
    """

    pxy: np.ndarray

    def __post_init__(self):
        pxy = np.asarray(self.pxy, dtype=float)
        if pxy.ndim != 2 or pxy.shape[0] < 1 or pxy.shape[1] < 2:
            raise DomainError(f"joint must be (instances, labels>=2), got {pxy.shape}")
        if np.any(pxy < 0):
            raise DomainError("joint entries must be non-negative")
        if abs(float(pxy.sum()) - 1.0) > JOINT_MASS_TOL:
            raise DomainError(f"joint mass must be 1, got {pxy.sum()!r}")
        object.__setattr__(self, "pxy", pxy)

    @property
    def n_instances(self) -> int:
        return self.pxy.shape[0]

    @property
    def k(self) -> int:
        return self.pxy.shape[1]

    @property
    def px(self) -> np.ndarray:
        """Marginal p(x) as row sums."""
        return self.pxy.sum(axis=1)

    @staticmethod
    def random(n_instances: int, k: int, rng: np.random.Generator) -> "DiscreteJoint":
        """Strictly positive random joint, normalized exactly."""
        raw = rng.random((n_instances, k)) + 0.05
        total = raw.sum()
        pxy = raw / total
        # force exact unit mass in double precision
        pxy[-1, -1] += 1.0 - pxy.sum()
        return DiscreteJoint(pxy)


def _check_scores(joint: DiscreteJoint, probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (joint.n_instances, joint.k):
        raise DomainError(
            f"scores must cover every instance: expected {(joint.n_instances, joint.k)}, "
            f"got {probs.shape}"
        )
    return probs


def supervised_risk(joint: DiscreteJoint, probs: np.ndarray, loss: ClasswiseLoss) -> float:
    """Exact supervised risk: sum over (x, y) of p(x, y) * loss(probs[x], y)."""
    probs = _check_scores(joint, probs)
    return float((joint.pxy * loss.value_matrix(probs)).sum())


def conditional_subset_laws(
    joint: DiscreteJoint, cfg: QueryConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact response-conditioned laws p(x, L | s) of the query mechanism.

    Returns (membership, table1, table0): membership is the boolean
    (C(k,m), k) subset matrix in enumeration order; table_s[i, j] is
    p(x=i, L=j-th subset | s).  Conditioning on s=1 restricts the latent
    label to L, on s=0 to its complement:

        p(x, L | s=1) = sum_{y in L}    p(x, y) / C(k-1, m-1)
        p(x, L | s=0) = sum_{y not in L} p(x, y) / C(k-1, m)

    Each table sums to 1; subsets of size != m carry no mass.
    """
    if joint.k != cfg.k:
        raise DomainError(f"joint has k={joint.k} but query config has k={cfg.k}")
    M = membership_matrix(cfg)
    k, m = cfg.k, cfg.m
    table1 = joint.pxy @ M.T.astype(float) / comb(k - 1, m - 1)
    table0 = joint.pxy @ (~M).T.astype(float) / comb(k - 1, m)
    return M, table1, table0


def joint_recovery_residual(joint: DiscreteJoint, cfg: QueryConfig) -> float:
    """Largest error of the two inversion formulas recovering p(x, y).

    Either response-conditioned law, together with the marginal p(x),
    determines the joint exactly:

        p(x,y) = (k-1)/(k-m) * sum_{L : y in L} p(x,L|s=1) - (m-1)/(k-m) * p(x)
        p(x,y) = (k-1)/m     * sum_{L : y not in L} p(x,L|s=0) - (k-m-1)/m * p(x)

    Returns max over instances, labels, and both formulas of the absolute
    deviation from p(x, y); exact algebra gives ~1e-16 in double precision.
    """
    M, table1, table0 = conditional_subset_laws(joint, cfg)
    k, m = cfg.k, cfg.m
    px = joint.px[:, None]
    Mf = M.astype(float)
    rec_in = (k - 1) / (k - m) * (table1 @ Mf) - (m - 1) / (k - m) * px
    rec_out = (k - 1) / m * (table0 @ (1.0 - Mf)) - (k - m - 1) / m * px
    return float(
        max(np.abs(rec_in - joint.pxy).max(), np.abs(rec_out - joint.pxy).max())
    )


def risk_identity_check(
    joint: DiscreteJoint,
    probs: np.ndarray,
    loss: ClasswiseLoss,
    cfg: QueryConfig,
) -> tuple[float, float, float]:
    """Supervised risk versus its query-response rewriting, both exact.

    The rewriting takes expectations of the subset-average loss under the
    two response-conditioned laws:

        rhs = m * E[lbar | s=1] - (m-1) * E[lbar | s=0].

    Returns (lhs, rhs, |lhs - rhs|).
    """
    probs = _check_scores(joint, probs)
    M, table1, table0 = conditional_subset_laws(joint, cfg)
    lbar = loss.value_matrix(probs) @ M.T.astype(float) / cfg.m  # (n_x, C)
    lhs = supervised_risk(joint, probs, loss)
    rhs = cfg.m * float((table1 * lbar).sum()) - (cfg.m - 1) * float((table0 * lbar).sum())
    return lhs, rhs, abs(lhs - rhs)


def mae_conditional_mean(p: np.ndarray, y: int, s: int, cfg: QueryConfig) -> float:
    """Expected subset-average mae loss given (x, y) and the response.

    Conditioned on s=1 the subset is uniform over those containing y, so
    each other label joins with frequency (m-1)/(k-1); conditioned on s=0
    it is uniform over those excluding y:

        s=1:  2 - (2/m) * (p_y + (m-1)/(k-1) * (1 - p_y))
        s=0:  2 - 2/(k-1) * (1 - p_y)

    The m / (m-1) weighted difference of the two collapses to the
    supervised mae loss 2 - 2*p_y.
    """
    p = np.asarray(p, dtype=float)
    if not (1 <= y <= cfg.k):
        raise DomainError(f"label {y} outside 1..{cfg.k}")
    if s not in (0, 1):
        raise DomainError(f"response must be 0 or 1, got {s}")
    k, m = cfg.k, cfg.m
    py = float(p[y - 1])
    if s == 1:
        return 2.0 - (2.0 / m) * (py + (m - 1) / (k - 1) * (1.0 - py))
    return 2.0 - 2.0 / (k - 1) * (1.0 - py)
