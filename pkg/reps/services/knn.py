"""
1-nearest-neighbour prediction over a prototype set.

Ties are always broken by ascending prototype index.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from reps.services.distance import DistanceMatrix
from reps.services.errors import DimensionMismatch, EmptyPrototypeSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prediction:
    label: int
    neighbor: int
    # distance for predict_1nn, adjusted rank for predict_adjusted
    value: float


def _argmin_prediction(values: np.ndarray, proto_labels: np.ndarray) -> Prediction:
    if len(values) == 0:
        raise EmptyPrototypeSet("prototype set is empty")
    if len(values) != len(proto_labels):
        raise DimensionMismatch(f"{len(values)} values but {len(proto_labels)} prototype labels")
    # argmin returns the first minimum, i.e. the lowest index
    j = int(np.argmin(values))
    return Prediction(label=int(proto_labels[j]), neighbor=j, value=float(values[j]))


def predict_1nn(dists_to_prototypes: Sequence[float], proto_labels: Sequence[int]) -> Prediction:
    """Label of the closest prototype."""
    return _argmin_prediction(np.asarray(dists_to_prototypes, dtype=np.float64),
                              np.asarray(proto_labels))


def predict_adjusted(ranks_to_prototypes: Sequence[int], alpha: Sequence[float],
                     proto_labels: Sequence[int]) -> Prediction:
    """Label of the prototype with the smallest adjusted rank R + alpha."""
    ranks = np.asarray(ranks_to_prototypes, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if ranks.shape != alpha.shape:
        raise DimensionMismatch(f"{len(ranks)} ranks but {len(alpha)} degradation values")
    return _argmin_prediction(ranks + alpha, np.asarray(proto_labels))


def nearest_prototypes(D: DistanceMatrix, proto_indices: Sequence[int],
                       query_indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Leave-one-out nearest prototype for each query.

    A query that is itself a prototype never matches itself.

    Returns:
        (neighbor instance indices, distances), aligned with query_indices
    """
    protos = np.sort(np.asarray(proto_indices, dtype=np.int64))
    queries = np.asarray(query_indices, dtype=np.int64)
    if len(protos) == 0:
        raise EmptyPrototypeSet("prototype set is empty")
    if len(queries) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)

    sub = np.array(D.values[np.ix_(queries, protos)], copy=True)
    sub[queries[:, None] == protos[None, :]] = np.inf

    best = np.argmin(sub, axis=1)
    dist = sub[np.arange(len(queries)), best]
    if np.isinf(dist).any():
        q = int(queries[np.flatnonzero(np.isinf(dist))[0]])
        raise EmptyPrototypeSet(f"instance {q} has no prototype other than itself")
    return protos[best], dist


def evaluate_error(D: DistanceMatrix, proto_indices: Sequence[int], labels: Sequence[int],
                   query_indices: Sequence[int]) -> float:
    """Misclassification rate of 1-NN over the prototypes, self excluded."""
    labels = np.asarray(labels)
    queries = np.asarray(query_indices, dtype=np.int64)
    if len(queries) == 0:
        return 0.0
    neighbors, _ = nearest_prototypes(D, proto_indices, queries)
    wrong = int(np.count_nonzero(labels[neighbors] != labels[queries]))
    return wrong / len(queries)
