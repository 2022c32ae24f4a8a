"""
Pairwise dissimilarities: Euclidean for feature rows, Sakoe-Chiba banded
DTW for time series, and the full mutual distance matrix.
"""
import hashlib
import logging
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numba import njit
from scipy.spatial.distance import pdist, squareform

from reps.services.cache import get_cache, set_cache
from reps.services.errors import (
    AsymmetryError,
    DimensionMismatch,
    EmptySeries,
    InvalidConfig,
    MatchInfeasible,
    MetricMismatch,
    NegativeDistance,
    NonzeroDiagonal,
    ParseError,
)
from reps.services.executor import run_concurrent
from reps.services.settings import get_thread_count

if TYPE_CHECKING:
    from reps.services.dataset import LabeledDataset

logger = logging.getLogger(__name__)

METRICS = ("euclidean", "dtw")
DEFAULT_WINDOW = 5

# payload kind each metric accepts
_METRIC_KIND = {"euclidean": "vectors", "dtw": "series"}


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric, nonnegative n x n dissimilarities with a zero diagonal."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionMismatch(f"distance matrix must be square, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_array(cls, values, symmetrize_tol: float = 1e-9) -> "DistanceMatrix":
        """
        Validate raw values. Asymmetry within `symmetrize_tol` (relative) is
        averaged away; anything larger is rejected.
        """
        d = np.asarray(values, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DimensionMismatch(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            i, j = np.argwhere(~np.isfinite(d))[0]
            raise ParseError("non-finite distance", row=int(i) + 1, column=int(j) + 2)
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise NegativeDistance(f"D[{i + 1}][{j + 1}] = {d[i, j]}")
        diag = np.diag(d)
        if np.any(diag != 0):
            i = int(np.flatnonzero(diag != 0)[0])
            raise NonzeroDiagonal(f"D[{i + 1}][{i + 1}] = {diag[i]}")

        diff = np.abs(d - d.T)
        scale = np.maximum(np.abs(d), np.abs(d.T))
        bad = diff > symmetrize_tol * scale
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise AsymmetryError(f"D[{i + 1}][{j + 1}] = {d[i, j]} but D[{j + 1}][{i + 1}] = {d[j, i]}")
        if np.any(diff > 0):
            logger.warning("Distance matrix symmetrized (asymmetry within tolerance)")
            d = (d + d.T) / 2.0
        return cls(d)

    def submatrix(self, indices: Sequence[int]) -> "DistanceMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return DistanceMatrix(self.values[np.ix_(idx, idx)])

    def scaled(self, factor: float) -> "DistanceMatrix":
        if factor <= 0:
            raise InvalidConfig("scale factor must be positive")
        return DistanceMatrix(self.values * factor)


# ------------------------------------------------------------------
# Pairwise measures
# ------------------------------------------------------------------
def euclidean(a, b) -> float:
    """Square root of the summed squared coordinate differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


@njit(nogil=True, cache=False)
def _dtw_banded(x, y, window):
    # x is the longer series; two rolling rows over y
    n = x.shape[0]
    m = y.shape[0]
    prev = np.full(m + 1, np.inf)
    curr = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        for j in range(m + 1):
            curr[j] = np.inf
        lo = max(1, i - window)
        hi = min(m, i + window)
        xi = x[i - 1]
        for j in range(lo, hi + 1):
            diff = xi - y[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if curr[j - 1] < best:
                best = curr[j - 1]
            curr[j] = diff * diff + best
        tmp = prev
        prev = curr
        curr = tmp
    return np.sqrt(prev[m])


@njit(nogil=True, cache=False)
def _dtw_rows(series, rows, window, out):
    # upper triangle of the given rows; each (i, j) is written by one caller only
    n = series.shape[0]
    for r in range(rows.shape[0]):
        i = rows[r]
        for j in range(i + 1, n):
            out[i, j] = _dtw_banded(series[i], series[j], window)


def dtw(a, b, window: int = DEFAULT_WINDOW) -> float:
    """
    Banded dynamic time warping distance.

    Local cost is the squared difference; the result is the square root of
    the cheapest cumulative cost over monotone alignments with |i - j| <= window.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionMismatch("series must be one-dimensional")
    if a.size == 0 or b.size == 0:
        raise EmptySeries("dtw needs two nonempty series")
    if window < 0:
        raise InvalidConfig(f"window must be nonnegative, got {window}")
    if abs(a.size - b.size) > window:
        raise MatchInfeasible(f"lengths {a.size} and {b.size} cannot align within window {window}")
    if a.size < b.size:
        a, b = b, a
    return float(_dtw_banded(a, b, int(window)))


# ------------------------------------------------------------------
# Matrix assembly
# ------------------------------------------------------------------
def check_metric(kind: str, metric: str) -> None:
    if metric not in METRICS:
        raise MetricMismatch(f"unknown metric {metric!r}")
    if _METRIC_KIND[metric] != kind:
        raise MetricMismatch(f"metric {metric} does not apply to {kind} data")


def default_metric(kind: str) -> str:
    return "dtw" if kind == "series" else "euclidean"


def build_matrix(ds: "LabeledDataset", metric: str = "euclidean", window: int = DEFAULT_WINDOW) -> DistanceMatrix:
    """
    Full mutual distance matrix of a dataset.

    Only the upper triangle is computed; it is mirrored to the lower one.
    DTW rows are spread over the shared thread pool; the output does not
    depend on the number of workers.
    """
    check_metric(ds.kind, metric)
    n = ds.n
    if n <= 1:
        return DistanceMatrix(np.zeros((n, n)))

    start = time.time()
    if metric == "euclidean":
        values = squareform(pdist(ds.instances, "euclidean"))
    else:
        if window < 0:
            raise InvalidConfig(f"window must be nonnegative, got {window}")
        series = np.ascontiguousarray(ds.instances, dtype=np.float64)
        upper = np.zeros((n, n))
        blocks = min(n - 1, get_thread_count() * 4)
        # interleaved rows balance the triangular workload
        tasks = [
            (_dtw_rows, (series, np.arange(b, n - 1, blocks, dtype=np.int64), int(window), upper), {})
            for b in range(blocks)
        ]
        run_concurrent(tasks)
        values = upper + upper.T

    elapsed = time.time() - start
    logger.info(f"{metric} matrix for {ds.name}: n={n}, {elapsed:.2f}s")
    return DistanceMatrix(values)


def _fingerprint(ds: "LabeledDataset") -> str:
    return hashlib.sha1(np.ascontiguousarray(ds.instances).tobytes()).hexdigest()[:16]


def get_or_build_matrix(ds: "LabeledDataset", metric: str = "euclidean", window: int = DEFAULT_WINDOW) -> DistanceMatrix:
    """build_matrix through the in-memory cache."""
    key = f"distance:{ds.name}:{metric}:{window if metric == 'dtw' else '-'}:{_fingerprint(ds)}"
    cached = get_cache(key)
    if cached is not None:
        return cached
    matrix = build_matrix(ds, metric, window)
    set_cache(key, matrix)
    return matrix
