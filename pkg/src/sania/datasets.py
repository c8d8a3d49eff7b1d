"""Binary-classification datasets: LibSVM parsing, synthetic generation, column scaling, batching.

The wire format is LibSVM text (`<label> <idx>:<val> ...`, 1-based ascending
feature indices). In memory everything is 0-based CSR. Datasets are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import LibsvmParseError

PM1 = "pm1"
ZERO_ONE = "zero-one"

_TARGETS = {PM1: (-1.0, 1.0), ZERO_ONE: (0.0, 1.0)}


@dataclass(eq=False)
class SparseDataset:
    """Row-sparse design matrix plus a label per row.

    ``indptr``/``indices``/``data`` follow the CSR convention; indices within a
    row are strictly increasing and < ``cols``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    labels: np.ndarray
    cols: int

    @property
    def rows(self) -> int:
        return len(self.labels)

    @property
    def X(self) -> sp.csr_matrix:
        """Design matrix as a scipy CSR matrix (cached)."""
        if not hasattr(self, "_X"):
            self._X = sp.csr_matrix(
                (self.data, self.indices, self.indptr), shape=(self.rows, self.cols)
            )
        return self._X

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.X.todense())

    def row_pairs(self, i: int):
        """(feature index, value) pairs of row i, ascending, 0-based."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return list(zip(self.indices[lo:hi].tolist(), self.data[lo:hi].tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (
            self.cols == other.cols
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class ScalingVector:
    """Per-column multipliers v_j = exp(a_j), a_j ~ Uniform[-k, k], one RNG stream in column order."""

    v: np.ndarray
    k: float
    seed: int


@dataclass(frozen=True)
class BatchSchedule:
    """One epoch's worth of minibatches: a fresh seeded permutation of {0..n-1} cut into consecutive slices."""

    n: int
    batch_size: int
    seed: int
    epoch: int = 0


def _map_labels(raw: np.ndarray, normalize: str) -> np.ndarray:
    if normalize not in _TARGETS:
        raise ValueError(f"unknown label normalization {normalize!r}")
    lo, hi = _TARGETS[normalize]
    uniq = np.unique(raw)
    if uniq.size == 0:
        return raw.astype(np.float64)
    if set(uniq.tolist()) <= {lo, hi}:
        return raw.astype(np.float64)
    if uniq.size == 1:
        return np.full_like(raw, hi, dtype=np.float64)
    if uniq.size > 2:
        raise ValueError(f"binary labels required, found {uniq.size} distinct values")
    out = np.where(raw == uniq[0], lo, hi)
    return out.astype(np.float64)


def parse_libsvm(source, normalize: str = PM1) -> SparseDataset:
    """Parse LibSVM text into a :class:`SparseDataset`.

    ``source`` may be a string or any iterable of lines. Labels are mapped onto
    {-1,+1} (``normalize="pm1"``) or {0,1} (``"zero-one"``): the smaller raw
    value goes to the smaller target; raw values already in the target set are
    kept as-is.

    Raises :class:`LibsvmParseError` (with the offending 1-based line number)
    on malformed tokens, non-ascending or duplicate feature indices.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    raw_labels: list[float] = []
    max_index = 0
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw_labels.append(float(tokens[0]))
        except ValueError:
            raise LibsvmParseError(lineno, f"bad label token {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"bad feature token {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(lineno, f"feature index {idx} is not positive")
            if idx == prev:
                raise LibsvmParseError(lineno, f"duplicate feature index {idx}")
            if idx < prev:
                raise LibsvmParseError(lineno, f"non-ascending feature index {idx}")
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))
    return SparseDataset(
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        data=np.asarray(data, dtype=np.float64),
        labels=_map_labels(np.asarray(raw_labels, dtype=np.float64), normalize),
        cols=max_index,
    )


def serialize_libsvm(ds: SparseDataset) -> str:
    """Inverse of :func:`parse_libsvm` for the stored entries.

    The format has no notion of trailing empty columns, so the round trip is
    exact whenever ``cols`` equals the largest occupied index.
    """
    lines = []
    for i in range(ds.rows):
        label = ds.labels[i]
        parts = [repr(int(label)) if label == int(label) else repr(float(label))]
        lo, hi = ds.indptr[i], ds.indptr[i + 1]
        for j, v in zip(ds.indices[lo:hi], ds.data[lo:hi]):
            parts.append(f"{j + 1}:{float(v)!r}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def load_libsvm(path, normalize: str = PM1) -> SparseDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, normalize=normalize)


def from_dense(X: np.ndarray, labels: np.ndarray) -> SparseDataset:
    csr = sp.csr_matrix(np.asarray(X, dtype=np.float64))
    return SparseDataset(
        indptr=csr.indptr.astype(np.int64),
        indices=csr.indices.astype(np.int64),
        data=csr.data.astype(np.float64),
        labels=np.asarray(labels, dtype=np.float64),
        cols=X.shape[1],
    )


def generate_synthetic(n: int, d: int, seed: int = 0) -> SparseDataset:
    """Dense standard-normal design with a hidden separator.

    Labels are sign(X w*) with a hidden standard-normal w*, mapped to {-1,+1}
    (a zero product, impossible almost surely, maps to +1). Linearly separable
    by construction; bit-identical regeneration for a fixed seed.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w_star = rng.standard_normal(d)
    labels = np.where(X @ w_star < 0.0, -1.0, 1.0)
    return from_dense(X, labels)


def scaling_vector(cols: int, k: float, seed: int) -> ScalingVector:
    if k < 0:
        raise ValueError("k must be >= 0")
    rng = np.random.default_rng(seed)
    v = np.exp(rng.uniform(-k, k, size=cols))
    return ScalingVector(v=v, k=float(k), seed=int(seed))


def scale_columns(ds: SparseDataset, k: float, seed: int) -> tuple[SparseDataset, ScalingVector]:
    """Multiply column j by v_j = exp(Uniform[-k, k]). The input is left untouched."""
    sv = scaling_vector(ds.cols, k, seed)
    scaled = SparseDataset(
        indptr=ds.indptr.copy(),
        indices=ds.indices.copy(),
        data=ds.data * sv.v[ds.indices],
        labels=ds.labels.copy(),
        cols=ds.cols,
    )
    return scaled, sv


def relabel(ds: SparseDataset, normalize: str) -> SparseDataset:
    """Same dataset with labels mapped onto the other target convention."""
    return SparseDataset(
        indptr=ds.indptr,
        indices=ds.indices,
        data=ds.data,
        labels=_map_labels(ds.labels, normalize),
        cols=ds.cols,
    )


def batches(schedule: BatchSchedule) -> list[np.ndarray]:
    """Index sets of one epoch: sampling without replacement, final batch may be short."""
    n, bs = schedule.n, schedule.batch_size
    if not 1 <= bs <= n:
        raise ValueError(f"batch_size {bs} out of range for n={n}")
    perm = np.random.default_rng([schedule.seed, schedule.epoch]).permutation(n)
    return [perm[i : i + bs] for i in range(0, n, bs)]
