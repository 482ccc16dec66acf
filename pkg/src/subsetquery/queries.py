"""Label space, size-m label subsets, and the symmetric random query mechanism.

A query draws a subset L of exactly m labels uniformly from the family of
all such subsets and reveals only the binary membership response
s = 1{y in L}.  This module owns the subset representation, the uniform
sampler, the deterministic response, and exhaustive enumeration used by
the verification oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import ConfigurationError, DomainError, EnumerationTooLargeError

__all__ = [
    "LabelSpace",
    "QueryConfig",
    "LabelSubset",
    "ENUMERATION_CAP",
    "sample_subset",
    "respond",
    "enumerate_subsets",
    "enumerate_in_out",
    "group_proportion",
    "membership_matrix",
]

# Enumeration exists for oracle verification at small scale only.
ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class LabelSpace:
    """The label set {1, ..., k}."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"label space needs k >= 2, got k={self.k}")

    def contains(self, y: int) -> bool:
        return 1 <= y <= self.k


@dataclass(frozen=True)
class QueryConfig:
    """Query mechanism parameters: k classes, subsets of size m, 1 <= m <= k-1."""

    space: LabelSpace
    m: int

    def __post_init__(self):
        if not (1 <= self.m <= self.space.k - 1):
            raise ConfigurationError(
                f"subset size must satisfy 1 <= m <= k-1, got m={self.m}, k={self.space.k}"
            )

    @property
    def k(self) -> int:
        return self.space.k

    @property
    def n_subsets(self) -> int:
        return comb(self.k, self.m)

    @staticmethod
    def of(k: int, m: int) -> "QueryConfig":
        return QueryConfig(LabelSpace(k), m)


@dataclass(frozen=True)
class LabelSubset:
    """A set of distinct labels, canonically encoded as a sorted tuple.

    Equality is set equality; the sorted encoding makes it bitwise.
    """

    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) == 0:
            raise DomainError("label subset must be nonempty")
        if list(self.members) != sorted(set(self.members)):
            raise DomainError(f"subset members must be distinct and sorted, got {self.members}")
        if self.members[0] < 1:
            raise DomainError(f"labels are 1-based, got {self.members}")

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, y: int) -> bool:
        return y in self.members

    def __iter__(self):
        return iter(self.members)

    @staticmethod
    def of(*members: int) -> "LabelSubset":
        return LabelSubset(tuple(sorted(members)))


def sample_subset(cfg: QueryConfig, rng: np.random.Generator) -> LabelSubset:
    """Uniform draw from all size-m subsets of {1..k}.

    Partial Fisher-Yates over 1..k: after m swap steps the first m slots
    are a uniformly distributed m-subset; sorting gives the canonical
    encoding.  O(k) time, exactly uniform, no rejection.
    """
    k, m = cfg.k, cfg.m
    pool = list(range(1, k + 1))
    for i in range(m):
        j = int(rng.integers(i, k))
        pool[i], pool[j] = pool[j], pool[i]
    return LabelSubset(tuple(sorted(pool[:m])))


def respond(y: int, L: LabelSubset, space: LabelSpace) -> int:
    """Membership response s = 1{y in L}."""
    if not space.contains(y):
        raise DomainError(f"label {y} outside 1..{space.k}")
    return 1 if y in L else 0


def enumerate_subsets(cfg: QueryConfig) -> list[LabelSubset]:
    """All size-m subsets exactly once, lexicographic in the sorted encoding."""
    total = cfg.n_subsets
    if total > ENUMERATION_CAP:
        raise EnumerationTooLargeError(total, ENUMERATION_CAP)
    return [LabelSubset(c) for c in combinations(range(1, cfg.k + 1), cfg.m)]


def enumerate_in_out(cfg: QueryConfig, y: int) -> tuple[list[LabelSubset], list[LabelSubset]]:
    """Partition of the subset family by membership of y.

    Returns (subsets containing y, subsets excluding y), with sizes
    C(k-1, m-1) and C(k-1, m).
    """
    if not cfg.space.contains(y):
        raise DomainError(f"label {y} outside 1..{cfg.k}")
    inside, outside = [], []
    for L in enumerate_subsets(cfg):
        (inside if y in L else outside).append(L)
    return inside, outside


def group_proportion(cfg: QueryConfig, s: int) -> float:
    """Population share of response group s: m/k for s=1, (k-m)/k for s=0.

    Holds for every latent label distribution because the subset draw is
    independent of (x, y) and each label lies in the same number of
    subsets.
    """
    if s not in (0, 1):
        raise DomainError(f"response must be 0 or 1, got {s}")
    return cfg.m / cfg.k if s == 1 else (cfg.k - cfg.m) / cfg.k


def membership_matrix(cfg: QueryConfig) -> np.ndarray:
    """Boolean (C(k,m), k) matrix: row i marks the members of the i-th subset.

    Row order matches enumerate_subsets; column j corresponds to label j+1.
    """
    subsets = enumerate_subsets(cfg)
    M = np.zeros((len(subsets), cfg.k), dtype=bool)
    for i, L in enumerate(subsets):
        for y in L:
            M[i, y - 1] = True
    return M
