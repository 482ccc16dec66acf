"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: configuration errors exit
with 2, data/file errors with 3, and everything else raised at runtime
with 4.
"""


class SubsetQueryError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SubsetQueryError):
    """Invalid configuration value (bad k/m, negative kappa, bad schema, ...)."""


class DomainError(SubsetQueryError):
    """Argument outside its mathematical domain (label out of range, empty subset, ...)."""


class EnumerationTooLargeError(SubsetQueryError):
    """Subset family too large to enumerate; carries the offending count."""

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"refusing to enumerate {count} subsets (cap {cap}); "
            "enumeration exists for small-scale verification only"
        )


class EmptyResponseGroupError(SubsetQueryError):
    """A required response group is empty; carries the observed counts."""

    def __init__(self, n1: int, n0: int):
        self.n1 = n1
        self.n0 = n0
        super().__init__(f"empty response group: n1={n1}, n0={n0}")


class DataError(SubsetQueryError):
    """Base class for dataset/file problems."""


class IdxFormatError(DataError):
    """Malformed IDX file: wrong magic number."""


class IdxTruncatedError(DataError):
    """IDX file shorter than its header promises."""


class IdxCountMismatchError(DataError):
    """Image and label files disagree on the number of records."""


class CsvFormatError(DataError):
    """Ragged rows, non-numeric cells, or out-of-range labels in a CSV table."""


class WeakFileFormatError(DataError):
    """Structurally invalid weak-dataset file (bad magic, missing provenance)."""


class WeakFileVersionError(DataError):
    """Weak-dataset file written by an unsupported format version."""


class WeakFileChecksumError(DataError):
    """Weak-dataset payload does not match its recorded checksum."""


class WeakFileInvariantError(DataError):
    """Decoded weak dataset violates a type invariant (subset size, label range, ...)."""


class TrainingError(SubsetQueryError):
    """Training could not proceed (no usable batches, ...)."""


class VerificationFailure(SubsetQueryError):
    """An identity or statistical check failed; carries the identity name."""

    def __init__(self, identity: str, detail: str):
        self.identity = identity
        self.detail = detail
        super().__init__(f"verification failed for {identity}: {detail}")
