"""Score functions with softmax output and exact manual backpropagation.

Two architectures: a linear map, and a one-hidden-layer ReLU network.
Parameters live in plain float64 arrays; forward returns the cache that
backward consumes, so a gradient is always computed against the exact
activations that produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "Scorer",
    "GradientBuffer",
    "init_scorer",
    "forward",
    "backward",
    "softmax",
    "predict_labels",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "subsetquery-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Scorer:
    """Parameterized map from features to k scores.

    architecture "linear": params W1 (k, d), b1 (k,).
    architecture "mlp":    params W1 (h, d), b1 (h,), W2 (k, h), b2 (k,).
    """

    architecture: str
    input_dim: int
    output_dim: int
    hidden_width: int
    params: dict[str, np.ndarray]

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))


@dataclass
class GradientBuffer:
    """Accumulated gradients, shape-congruent with a Scorer's parameters."""

    grads: dict[str, np.ndarray]

    @staticmethod
    def zeros_like(scorer: Scorer) -> "GradientBuffer":
        return GradientBuffer({k: np.zeros_like(v) for k, v in scorer.params.items()})

    def add(self, other: "GradientBuffer") -> None:
        for k in self.grads:
            self.grads[k] += other.grads[k]

    def scale(self, factor: float) -> None:
        for k in self.grads:
            self.grads[k] *= factor


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_scorer(
    architecture: str,
    input_dim: int,
    output_dim: int,
    rng: np.random.Generator,
    hidden_width: int = 0,
) -> Scorer:
    """Glorot-uniform weights, zero biases; deterministic under the rng seed."""
    if input_dim < 1 or output_dim < 1:
        raise ConfigurationError("input_dim and output_dim must be >= 1")
    if architecture == "linear":
        params = {
            "W1": _glorot(rng, input_dim, output_dim, (output_dim, input_dim)),
            "b1": np.zeros(output_dim),
        }
        hidden_width = 0
    elif architecture == "mlp":
        if hidden_width < 1:
            raise ConfigurationError("mlp needs hidden_width >= 1")
        params = {
            "W1": _glorot(rng, input_dim, hidden_width, (hidden_width, input_dim)),
            "b1": np.zeros(hidden_width),
            "W2": _glorot(rng, hidden_width, output_dim, (output_dim, hidden_width)),
            "b2": np.zeros(output_dim),
        }
    else:
        raise ConfigurationError(f"unknown architecture {architecture!r}")
    return Scorer(architecture, input_dim, output_dim, hidden_width, params)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Rowwise softmax with max-subtraction for overflow safety."""
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(scorer: Scorer, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """Scores and softmax probabilities for a batch.

    X is (n, d) or a single (d,) vector; returns (scores, probs, cache)
    with matching leading shape.  The cache feeds backward().
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != scorer.input_dim:
        raise DomainError(f"expected features of dim {scorer.input_dim}, got {X.shape[1]}")
    if scorer.architecture == "linear":
        Z = X @ scorer.params["W1"].T + scorer.params["b1"]
        cache = {"X": X}
    else:
        A = X @ scorer.params["W1"].T + scorer.params["b1"]
        H = np.maximum(A, 0.0)
        Z = H @ scorer.params["W2"].T + scorer.params["b2"]
        cache = {"X": X, "A": A, "H": H}
    P = softmax(Z)
    cache["P"] = P
    if single:
        return Z[0], P[0], cache
    return Z, P, cache


def backward(scorer: Scorer, cache: dict, dP: np.ndarray) -> GradientBuffer:
    """Exact parameter gradient of sum_i <dP[i], probs[i]>.

    The softmax Jacobian diag(p) - p p^T contracts with the upstream
    probability gradient, then the affine layers backpropagate as usual.
    """
    dP = np.asarray(dP, dtype=float)
    if dP.ndim == 1:
        dP = dP[None, :]
    P, X = cache["P"], cache["X"]
    dZ = P * (dP - (dP * P).sum(axis=1, keepdims=True))
    if scorer.architecture == "linear":
        return GradientBuffer({"W1": dZ.T @ X, "b1": dZ.sum(axis=0)})
    H, A = cache["H"], cache["A"]
    dW2 = dZ.T @ H
    db2 = dZ.sum(axis=0)
    dH = dZ @ scorer.params["W2"]
    dA = dH * (A > 0.0)
    return GradientBuffer(
        {"W1": dA.T @ X, "b1": dA.sum(axis=0), "W2": dW2, "b2": db2}
    )


def predict_labels(scorer: Scorer, X: np.ndarray) -> np.ndarray:
    """1-based argmax labels; ties resolve to the smallest label index."""
    _, P, _ = forward(scorer, np.atleast_2d(np.asarray(X, dtype=float)))
    return P.argmax(axis=1) + 1


def save_checkpoint(scorer: Scorer, path: str | Path) -> None:
    """Versioned JSON checkpoint with row-major parameter arrays.

    Floats are serialized via repr, so load_checkpoint restores bitwise
    identical float64 parameters.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": scorer.architecture,
        "input_dim": scorer.input_dim,
        "output_dim": scorer.output_dim,
        "hidden_width": scorer.hidden_width,
        "params": {k: v.tolist() for k, v in sorted(scorer.params.items())},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> Scorer:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path} is not a scorer checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(
            f"unsupported checkpoint version {doc.get('version')!r} in {path}"
        )
    params = {k: np.array(v, dtype=float) for k, v in doc["params"].items()}
    scorer = Scorer(
        architecture=doc["architecture"],
        input_dim=int(doc["input_dim"]),
        output_dim=int(doc["output_dim"]),
        hidden_width=int(doc["hidden_width"]),
        params=params,
    )
    expected = {"linear": {"W1", "b1"}, "mlp": {"W1", "b1", "W2", "b2"}}.get(
        scorer.architecture
    )
    if expected is None or set(params) != expected:
        raise ConfigurationError(f"checkpoint {path} has malformed parameters")
    return scorer
