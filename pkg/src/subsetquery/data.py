"""Labeled source data, the query-response observation process, and file IO.

The learner-facing view is a QueryResponseDataset: features, queried
subsets, and binary membership responses.  It carries no label field, so
no training code path can touch the latent labels; the only place labels
and responses coexist is inside weakify(), which applies the observation
process and then drops the labels.

On-disk formats: IDX (big-endian, for MNIST-family ingestion), numeric
CSV with a label column, and a binary weak-dataset format documented at
save_weak.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    CsvFormatError,
    DomainError,
    IdxCountMismatchError,
    IdxFormatError,
    IdxTruncatedError,
    WeakFileChecksumError,
    WeakFileFormatError,
    WeakFileInvariantError,
    WeakFileVersionError,
)
from .queries import QueryConfig, sample_subset
from .rng import make_rng

__all__ = [
    "LabeledDataset",
    "Provenance",
    "QueryResponseDataset",
    "GaussianMixtureSpec",
    "generate_mixture",
    "weakify",
    "load_idx",
    "load_csv",
    "save_csv",
    "save_weak",
    "load_weak",
    "orthonormal_means",
    "desk_mixture_spec",
    "triangle_mixture_spec",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

WEAK_MAGIC = b"SQWK"
WEAK_VERSION = 1


@dataclass
class LabeledDataset:
    """Latent supervised data: features (n, d) and 1-based labels in 1..k."""

    features: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DomainError(f"features must be a nonempty (n, d) matrix, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DomainError("labels must be a length-n sequence")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("features must be finite")
        if self.labels.min() < 1 or self.labels.max() > self.k:
            raise DomainError(f"labels must lie in 1..{self.k}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Provenance:
    source_id: str
    seed: int
    k: int
    m: int


@dataclass(eq=False)
class QueryResponseDataset:
    """Observable training data: features, size-m subsets, responses.

    Features are float32 (the on-disk precision); numeric work upcasts to
    float64.  Subsets are an (n, m) array of sorted distinct 1-based
    labels; responses are 0/1.  No label field exists by construction.
    """

    features: np.ndarray
    subsets: np.ndarray
    responses: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.subsets = np.asarray(self.subsets, dtype=np.int64)
        self.responses = np.asarray(self.responses, dtype=np.uint8)
        n = self.features.shape[0]
        if self.subsets.ndim != 2 or self.subsets.shape[0] != n:
            raise DomainError("subsets must be an (n, m) array")
        if self.responses.shape != (n,):
            raise DomainError("responses must be a length-n sequence")
        m, k = self.provenance.m, self.provenance.k
        if self.subsets.shape[1] != m:
            raise WeakFileInvariantError(
                f"subset rows have size {self.subsets.shape[1]}, expected m={m}"
            )
        if n and (
            self.subsets.min() < 1
            or self.subsets.max() > k
            or np.any(np.diff(self.subsets, axis=1) <= 0)
        ):
            raise WeakFileInvariantError("subset members must be sorted, distinct, in 1..k")
        if n and self.responses.max() > 1:
            raise WeakFileInvariantError("responses must be 0 or 1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset_mask(self) -> np.ndarray:
        """Boolean (n, k) membership matrix of the queried subsets."""
        n, k = self.n, self.provenance.k
        mask = np.zeros((n, k), dtype=bool)
        rows = np.repeat(np.arange(n), self.subsets.shape[1])
        mask[rows, (self.subsets - 1).ravel()] = True
        return mask

    def __eq__(self, other) -> bool:
        if not isinstance(other, QueryResponseDataset):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.subsets, other.subsets)
            and np.array_equal(self.responses, other.responses)
        )


@dataclass
class GaussianMixtureSpec:
    """Synthetic class-conditional Gaussian mixture with isotropic noise."""

    k: int
    d: int
    means: np.ndarray
    sigma: float
    class_priors: np.ndarray
    n_train: int
    n_test: int

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.class_priors = np.asarray(self.class_priors, dtype=float)
        if self.means.shape != (self.k, self.d):
            raise ConfigurationError(f"means must be (k, d)={(self.k, self.d)}, got {self.means.shape}")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be >= 0")
        if self.class_priors.shape != (self.k,) or np.any(self.class_priors < 0):
            raise ConfigurationError("class_priors must be k non-negative reals")
        if abs(float(self.class_priors.sum()) - 1.0) > 1e-10:
            raise ConfigurationError("class_priors must sum to 1")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigurationError("n_train and n_test must be >= 1")


def generate_mixture(
    spec: GaussianMixtureSpec, rng: np.random.Generator
) -> tuple[LabeledDataset, LabeledDataset]:
    """Sample disjoint train and test splits from the mixture."""

    def draw(n: int) -> LabeledDataset:
        u = rng.random(n)
        labels = np.searchsorted(np.cumsum(spec.class_priors), u, side="right") + 1
        labels = np.minimum(labels, spec.k)  # guard the u ~ 1.0 edge
        noise = rng.standard_normal((n, spec.d))
        features = spec.means[labels - 1] + spec.sigma * noise
        return LabeledDataset(features, labels, spec.k)

    return draw(spec.n_train), draw(spec.n_test)


def weakify(data: LabeledDataset, cfg: QueryConfig, seed: int, source_id: str) -> QueryResponseDataset:
    """Apply the observation process: per-row uniform subset, membership bit.

    Drops the labels from the output; regenerating with the same
    provenance (source data, seed, k, m) is bitwise reproducible.
    """
    if data.k != cfg.k:
        raise DomainError(f"dataset has k={data.k} but query config has k={cfg.k}")
    rng = make_rng(seed)
    n, m = data.n, cfg.m
    subsets = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        subsets[i] = sample_subset(cfg, rng).members
    responses = np.any(subsets == data.labels[:, None], axis=1).astype(np.uint8)
    return QueryResponseDataset(
        features=data.features.astype(np.float32),
        subsets=subsets,
        responses=responses,
        provenance=Provenance(source_id=source_id, seed=int(seed), k=cfg.k, m=cfg.m),
    )


# ---------------------------------------------------------------------------
# IDX ingestion


def _read_be32(buf: bytes, offset: int, path: Path) -> int:
    if offset + 4 > len(buf):
        raise IdxTruncatedError(f"{path}: truncated header")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path: str | Path, labels_path: str | Path) -> LabeledDataset:
    """Parse IDX image/label files into a labeled dataset.

    Big-endian headers; image magic 0x00000803 (rank-3 unsigned bytes),
    label magic 0x00000801 (rank-1).  Pixels scale to [0, 1] as v/255;
    labels shift from 0-based to 1-based.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    try:
        img = images_path.read_bytes()
        lab = labels_path.read_bytes()
    except FileNotFoundError as exc:
        raise IdxFormatError(f"file not found: {exc.filename}") from exc
    magic = _read_be32(img, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"{images_path}: expected image magic {IDX_IMAGE_MAGIC:#010x}, got {magic:#010x}")
    n = _read_be32(img, 4, images_path)
    rows = _read_be32(img, 8, images_path)
    cols = _read_be32(img, 12, images_path)
    if len(img) < 16 + n * rows * cols:
        raise IdxTruncatedError(f"{images_path}: expected {n * rows * cols} pixel bytes")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)

    magic = _read_be32(lab, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise IdxFormatError(f"{labels_path}: expected label magic {IDX_LABEL_MAGIC:#010x}, got {magic:#010x}")
    n_labels = _read_be32(lab, 4, labels_path)
    if len(lab) < 8 + n_labels:
        raise IdxTruncatedError(f"{labels_path}: expected {n_labels} label bytes")
    labels = np.frombuffer(lab, dtype=np.uint8, count=n_labels, offset=8)

    if n != n_labels:
        raise IdxCountMismatchError(f"{n} images but {n_labels} labels")
    features = pixels.reshape(n, rows * cols).astype(float) / 255.0
    labels = labels.astype(np.int64) + 1
    return LabeledDataset(features, labels, k=int(labels.max()))


# ---------------------------------------------------------------------------
# CSV


def load_csv(path: str | Path, label_col: int, k: int, delimiter: str = ",") -> LabeledDataset:
    """Numeric rectangular table; one column holds 1-based integer labels."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise CsvFormatError(f"file not found: {path}") from exc
    rows: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rows.append(line.split(delimiter))
    if not rows:
        raise CsvFormatError(f"{path}: empty table")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise CsvFormatError(f"{path}: ragged rows")
    col = label_col if label_col >= 0 else width + label_col
    if not (0 <= col < width):
        raise CsvFormatError(f"{path}: label column {label_col} outside 0..{width - 1}")
    try:
        table = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: non-numeric cell ({exc})") from exc
    labels = table[:, col]
    if np.any(labels != np.round(labels)):
        raise CsvFormatError(f"{path}: labels must be integers")
    labels = labels.astype(np.int64)
    if labels.min() < 1 or labels.max() > k:
        raise CsvFormatError(f"{path}: label outside 1..{k}")
    features = np.delete(table, col, axis=1)
    return LabeledDataset(features, labels, k)


def save_csv(data: LabeledDataset, path: str | Path, delimiter: str = ",") -> None:
    """Features then the label as last column; floats via repr (lossless)."""
    lines = []
    for x, y in zip(data.features, data.labels):
        lines.append(delimiter.join([repr(float(v)) for v in x] + [str(int(y))]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# weak-dataset binary format
#
# All integers little-endian.  Layout:
#   magic    4 bytes  b"SQWK"
#   version  u32
#   k, m     u32, u32
#   n        u64
#   d        u32
#   seed     u64
#   source   u16 length + utf-8 bytes
#   checksum u32  (crc32 of the payload)
#   payload  features float32 row-major (n*d*4)
#            subsets  u16 row-major      (n*m*2)
#            responses u8                (n)


def save_weak(ds: QueryResponseDataset, path: str | Path) -> None:
    prov = ds.provenance
    if prov.k > 0xFFFF:
        raise ConfigurationError("weak file stores labels as u16; k too large")
    payload = (
        ds.features.astype("<f4").tobytes()
        + ds.subsets.astype("<u2").tobytes()
        + ds.responses.astype("u1").tobytes()
    )
    source = prov.source_id.encode("utf-8")
    header = WEAK_MAGIC + struct.pack(
        "<IIIQIQH",
        WEAK_VERSION,
        prov.k,
        prov.m,
        ds.n,
        ds.d,
        prov.seed,
        len(source),
    )
    header += source + struct.pack("<I", zlib.crc32(payload))
    Path(path).write_bytes(header + payload)


def load_weak(path: str | Path) -> QueryResponseDataset:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except FileNotFoundError as exc:
        raise WeakFileFormatError(f"file not found: {path}") from exc
    if len(buf) < 4 or buf[:4] != WEAK_MAGIC:
        raise WeakFileFormatError(f"{path}: not a weak-dataset file")
    fixed = struct.calcsize("<IIIQIQH")
    if len(buf) < 4 + fixed:
        raise WeakFileFormatError(f"{path}: missing provenance block")
    version, k, m, n, d, seed, source_len = struct.unpack_from("<IIIQIQH", buf, 4)
    if version != WEAK_VERSION:
        raise WeakFileVersionError(f"{path}: format version {version}, expected {WEAK_VERSION}")
    offset = 4 + fixed
    if len(buf) < offset + source_len + 4:
        raise WeakFileFormatError(f"{path}: missing provenance block")
    source_id = buf[offset : offset + source_len].decode("utf-8")
    offset += source_len
    (checksum,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    expected = n * d * 4 + n * m * 2 + n
    payload = buf[offset:]
    if len(payload) != expected:
        raise WeakFileFormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) != checksum:
        raise WeakFileChecksumError(f"{path}: payload checksum mismatch")
    features = np.frombuffer(payload, dtype="<f4", count=n * d).reshape(n, d)
    subsets = np.frombuffer(payload, dtype="<u2", count=n * m, offset=n * d * 4).reshape(n, m)
    responses = np.frombuffer(payload, dtype="u1", count=n, offset=n * d * 4 + n * m * 2)
    return QueryResponseDataset(
        features=features.copy(),
        subsets=subsets.astype(np.int64),
        responses=responses.copy(),
        provenance=Provenance(source_id=source_id, seed=seed, k=k, m=m),
    )


# ---------------------------------------------------------------------------
# frozen desk-scale fixtures


def orthonormal_means(k: int, d: int, seed: int, radius: float = 1.0) -> np.ndarray:
    """k orthonormal d-dimensional directions scaled by radius.

    QR of a seeded Gaussian matrix with the sign convention that makes
    the factorization unique, so the result is a pure function of
    (k, d, seed, radius).
    """
    if d < k:
        raise ConfigurationError(f"need d >= k for orthonormal means, got d={d}, k={k}")
    g = make_rng(seed).standard_normal((d, k))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return radius * q.T


# Desk-scale benchmark, calibrated once: a supervised linear model reaches
# roughly 95% test accuracy at this sigma (see tests/test_acceptance.py).
DESK_K = 10
DESK_D = 16
DESK_MEANS_SEED = 1905
DESK_SIGMA = 0.28
DESK_N_TRAIN = 2000
DESK_N_TEST = 2000


def desk_mixture_spec(n_train: int = DESK_N_TRAIN, n_test: int = DESK_N_TEST) -> GaussianMixtureSpec:
    """The frozen k=10, d=16 mixture used by the qualitative experiments."""
    return GaussianMixtureSpec(
        k=DESK_K,
        d=DESK_D,
        means=orthonormal_means(DESK_K, DESK_D, DESK_MEANS_SEED),
        sigma=DESK_SIGMA,
        class_priors=np.full(DESK_K, 1.0 / DESK_K),
        n_train=n_train,
        n_test=n_test,
    )


def triangle_mixture_spec(n_train: int = 3000, n_test: int = 1000, sigma: float = 0.5) -> GaussianMixtureSpec:
    """Linearly separable 3-class mixture: means on an equilateral triangle."""
    angles = 2.0 * np.pi * np.arange(3) / 3.0
    means = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixtureSpec(
        k=3,
        d=2,
        means=means,
        sigma=sigma,
        class_priors=np.full(3, 1.0 / 3.0),
        n_train=n_train,
        n_test=n_test,
    )
