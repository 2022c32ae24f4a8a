"""
Leave-one-out rank matrix.

ranks[i][j] is the position (1 = nearest) of instance j when every instance
except i is sorted by distance from i. Ties go to the smaller index. The
diagonal holds 0 and is never read.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from reps.services.distance import DistanceMatrix
from reps.services.errors import DegenerateData

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray

    def __post_init__(self):
        ranks = np.array(self.ranks, dtype=np.int32, copy=True)
        ranks.setflags(write=False)
        object.__setattr__(self, "ranks", ranks)

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    def to_frame(self) -> pd.DataFrame:
        """Rank table for debug dumps (rows = target instance, columns = candidate)."""
        return pd.DataFrame(self.ranks, columns=[str(j) for j in range(self.n)])


def compute_ranks(matrix: DistanceMatrix) -> RankMatrix:
    """Rank every row of a distance matrix, excluding the row's own instance."""
    n = matrix.n
    if n < 2:
        raise DegenerateData(f"ranking needs at least 2 instances, found {n}")

    d = np.array(matrix.values, copy=True)
    # the instance itself sorts first and receives the sentinel position 0
    np.fill_diagonal(d, -np.inf)
    order = np.argsort(d, axis=1, kind="stable")

    ranks = np.empty((n, n), dtype=np.int32)
    positions = np.broadcast_to(np.arange(n, dtype=np.int32), (n, n))
    np.put_along_axis(ranks, order, positions, axis=1)
    return RankMatrix(ranks)
