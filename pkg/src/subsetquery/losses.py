"""Bounded classwise losses on the probability simplex and subset averages.

The three losses used with softmax predictions:

    mae   2 - 2*p[j]
    mse   1 - 2*p[j] + sum_c p[c]**2
    gce   (1 - max(p[j], eps)**q) / q

All are finite and bounded on the simplex, which the risk estimators rely
on; each loss reports its simplex supremum ``bound``.  The subset-average
loss is the mean of the classwise loss over a queried subset's members.

Losses are defined on probability vectors; composition with softmax and
backpropagation to parameters lives in :mod:`subsetquery.model`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .queries import LabelSubset

__all__ = ["ClasswiseLoss", "parse_loss", "check_prob_vector"]

PROB_SUM_TOL = 1e-10


def check_prob_vector(p: np.ndarray) -> np.ndarray:
    """Validate a probability vector: entries in [0,1], summing to 1."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise DomainError(f"probability vector must be 1-d, got shape {p.shape}")
    if np.any(p < -PROB_SUM_TOL) or np.any(p > 1 + PROB_SUM_TOL):
        raise DomainError("probability entries must lie in [0, 1]")
    if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
        raise DomainError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


@dataclass(frozen=True)
class ClasswiseLoss:
    """A bounded loss l(p, j) with analytic gradient in p.

    ``gce_q`` and ``gce_eps`` only apply to kind="gce": q controls the
    power, eps guards the q-1 power as p -> 0.
    """

    kind: str
    gce_q: float = 0.7
    gce_eps: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("mae", "mse", "gce"):
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")
        if self.kind == "gce":
            if not (0 < self.gce_q <= 1):
                raise ConfigurationError(f"gce q must be in (0, 1], got {self.gce_q}")
            if not (0 < self.gce_eps < 1):
                raise ConfigurationError(f"gce eps must be in (0, 1), got {self.gce_eps}")

    @property
    def bound(self) -> float:
        """Supremum of the loss over the simplex."""
        if self.kind == "gce":
            return (1.0 - self.gce_eps**self.gce_q) / self.gce_q
        return 2.0

    def value(self, p: np.ndarray, j: int) -> float:
        """Loss at probability vector p for class j (1-based)."""
        p = np.asarray(p, dtype=float)
        self._check_label(p, j)
        pj = p[j - 1]
        if self.kind == "mae":
            return float(2.0 - 2.0 * pj)
        if self.kind == "mse":
            return float(1.0 - 2.0 * pj + np.dot(p, p))
        q = self.gce_q
        return float((1.0 - max(pj, self.gce_eps) ** q) / q)

    def grad(self, p: np.ndarray, j: int) -> np.ndarray:
        """Gradient of value(p, j) with respect to p."""
        p = np.asarray(p, dtype=float)
        self._check_label(p, j)
        g = np.zeros_like(p)
        if self.kind == "mae":
            g[j - 1] = -2.0
        elif self.kind == "mse":
            g += 2.0 * p
            g[j - 1] -= 2.0
        else:
            pj = p[j - 1]
            # max(p_j, eps) picks the constant branch at p_j <= eps: zero gradient.
            if pj > self.gce_eps:
                g[j - 1] = -(pj ** (self.gce_q - 1.0))
        return g

    def subset_value(self, p: np.ndarray, L: LabelSubset) -> float:
        """Mean loss over the subset's members."""
        return float(np.mean([self.value(p, j) for j in L]))

    def subset_grad(self, p: np.ndarray, L: LabelSubset) -> np.ndarray:
        """Gradient of subset_value with respect to p."""
        p = np.asarray(p, dtype=float)
        g = np.zeros_like(p)
        for j in L:
            g += self.grad(p, j)
        return g / L.size

    # Batch forms used by the trainer and the oracles: P is (n, k) rows of
    # probabilities, mask is a boolean (n, k) subset-membership matrix with
    # a constant row sum m.

    def value_matrix(self, P: np.ndarray) -> np.ndarray:
        """(n, k) matrix of value(P[i], j+1) for every row i and class j."""
        P = np.asarray(P, dtype=float)
        if self.kind == "mae":
            return 2.0 - 2.0 * P
        if self.kind == "mse":
            return 1.0 - 2.0 * P + (P * P).sum(axis=1, keepdims=True)
        q = self.gce_q
        return (1.0 - np.maximum(P, self.gce_eps) ** q) / q

    def subset_value_batch(self, P: np.ndarray, mask: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        m = mask.sum(axis=1)
        if self.kind == "mae":
            return 2.0 - 2.0 * (P * mask).sum(axis=1) / m
        if self.kind == "mse":
            return 1.0 - 2.0 * (P * mask).sum(axis=1) / m + (P * P).sum(axis=1)
        q = self.gce_q
        clamped = np.maximum(P, self.gce_eps)
        per_class = (1.0 - clamped**q) / q
        return (per_class * mask).sum(axis=1) / m

    def subset_grad_batch(self, P: np.ndarray, mask: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        m = mask.sum(axis=1, keepdims=True)
        if self.kind == "mae":
            return -2.0 * mask / m
        if self.kind == "mse":
            return -2.0 * mask / m + 2.0 * P
        q = self.gce_q
        live = P > self.gce_eps
        return -np.where(live & mask, np.maximum(P, self.gce_eps) ** (q - 1.0), 0.0) / m

    def _check_label(self, p: np.ndarray, j: int):
        if not (1 <= j <= p.shape[-1]):
            raise DomainError(f"label {j} outside 1..{p.shape[-1]}")

    def spec_string(self) -> str:
        if self.kind == "gce":
            return f"gce:q={self.gce_q!r},eps={self.gce_eps!r}"
        return self.kind


def parse_loss(text: str) -> ClasswiseLoss:
    """Parse a loss selector: "mae", "mse", "gce", or "gce:q=<v>,eps=<v>"."""
    text = text.strip().lower()
    if text in ("mae", "mse", "gce"):
        return ClasswiseLoss(text)
    if text.startswith("gce:"):
        q, eps = 0.7, 1e-6
        for part in text[4:].split(","):
            if not part:
                continue
            key, _, value = part.partition("=")
            if key == "q":
                q = float(value)
            elif key == "eps":
                eps = float(value)
            else:
                raise ConfigurationError(f"unknown gce parameter {key!r} in {text!r}")
        return ClasswiseLoss("gce", gce_q=q, gce_eps=eps)
    raise ConfigurationError(f"unknown loss selector {text!r}")
