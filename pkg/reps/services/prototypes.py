"""
Prototype scoring and selection.

Pipeline: distance matrix -> leave-one-out ranks -> problem (r, rho) ->
solver -> degradation parameters alpha -> scores -> top-k prototypes.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from reps.services.dataset import LabeledDataset, kfold_split, max_fold_count
from reps.services.distance import DistanceMatrix
from reps.services.errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidConfig,
    InvalidFoldCount,
    InvalidK,
    SingleClass,
)
from reps.services.executor import run_concurrent
from reps.services.knn import evaluate_error
from reps.services.ranking import RankMatrix, compute_ranks
from reps.services.settings import RepsConfig
from reps.services.solvers import RepsProblem, RepsSolution, extract_alpha, solve

logger = logging.getLogger(__name__)

__all__ = [
    "PrototypeSet",
    "soft_max",
    "build_problem",
    "extract_alpha",
    "score_prototypes",
    "select",
    "class_quotas",
    "select_per_class",
    "choose_k",
    "fraction_to_k",
    "pipeline_scores",
    "score_instances",
    "fit_prototypes",
    "cv_fraction_errors",
    "select_by_cv",
    "holdout_fraction_errors",
]


@dataclass(frozen=True)
class PrototypeSet:
    selected: np.ndarray
    scores: np.ndarray
    k: int
    # set when the size was chosen by cross validation
    fraction: Optional[float] = None
    # select_by_cv only: validation ERR per candidate and the final retrain
    cv_errors: Optional[Dict[float, float]] = None
    solution: Optional[RepsSolution] = None


def soft_max(values: Sequence[float], beta: float) -> float:
    """log_beta(sum(beta ** v)), shifted by the maximum to avoid overflow."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("soft_max needs at least one value")
    m = float(v.max())
    log_beta = math.log(beta)
    return m + float(logsumexp((v - m) * log_beta)) / log_beta


def build_problem(ranks: RankMatrix, labels: Sequence[int], config: RepsConfig) -> RepsProblem:
    """
    Exponential-rank features and margins.

    r[i][j] = +beta^-R(i,j) for same-class j, -beta^-R(i,j) otherwise, r[i][i] = 0.
    rho[i] = (beta - 1) * sum over opposite-class j of beta^-R(i,j).
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = ranks.n
    if len(labels) != n:
        raise DimensionMismatch(f"{n} ranked instances but {len(labels)} labels")

    same = labels[:, None] == labels[None, :]
    lonely = np.flatnonzero(~(~same).any(axis=1))
    if len(lonely):
        raise SingleClass(f"instance {int(lonely[0])} has no opposite-class instance")

    beta = config.beta
    decay = np.power(beta, -ranks.ranks.astype(np.float64))
    np.fill_diagonal(decay, 0.0)
    r = np.where(same, decay, -decay)
    rho = (beta - 1.0) * np.where(same, 0.0, decay).sum(axis=1)
    return RepsProblem(r=r, rho=rho, labels=labels, config=config)


def score_prototypes(alpha: Sequence[float], ranks: RankMatrix) -> np.ndarray:
    """s[j] = alpha[j] + min over i != j of ranks[i][j]."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(alpha) != ranks.n:
        raise DimensionMismatch(f"{len(alpha)} alphas for {ranks.n} ranked instances")
    masked = np.array(ranks.ranks, dtype=np.int64)
    np.fill_diagonal(masked, np.iinfo(np.int64).max)
    return alpha + masked.min(axis=0)


def select(scores: Sequence[float], k: int, keep_highest: bool = True) -> PrototypeSet:
    """k best scores (largest by default), ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    n = len(scores)
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} must lie in [1, {n}]")
    index = np.arange(n)
    key = -scores if keep_highest else scores
    order = np.lexsort((index, key))
    return PrototypeSet(selected=np.sort(order[:k]), scores=scores, k=int(k))


def class_quotas(labels: Sequence[int], k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split k over the classes in proportion to their sizes.

    Largest remainders get the leftover slots (ties to the lower class id).
    When k covers every class, each class gets at least one slot, taken
    from the class holding the most.

    Returns:
        (classes, quotas) aligned arrays, quotas summing to k
    """
    classes, counts = np.unique(np.asarray(labels, dtype=np.int64), return_counts=True)
    exact = k * counts / counts.sum()
    quotas = np.floor(exact).astype(np.int64)
    rest = int(k - quotas.sum())
    order = np.lexsort((np.arange(len(classes)), -(exact - quotas)))
    quotas[order[:rest]] += 1
    if k >= len(classes):
        for c in np.flatnonzero(quotas == 0):
            quotas[int(np.argmax(quotas))] -= 1
            quotas[c] = 1
    return classes, quotas


def select_per_class(scores: Sequence[float], labels: Sequence[int], k: int,
                     keep_highest: bool = True) -> PrototypeSet:
    """select() run inside each class on its class_quotas() share of k."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(scores)
    if len(labels) != n:
        raise DimensionMismatch(f"{n} scores but {len(labels)} labels")
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} must lie in [1, {n}]")

    picked = []
    for c, quota in zip(*class_quotas(labels, k)):
        if quota == 0:
            continue
        members = np.flatnonzero(labels == c)
        picked.append(members[select(scores[members], int(quota), keep_highest).selected])
    return PrototypeSet(selected=np.sort(np.concatenate(picked)), scores=scores, k=int(k))


def choose_k(scores: Sequence[float], labels: Sequence[int], k: int,
             config: RepsConfig) -> PrototypeSet:
    if config.per_class:
        return select_per_class(scores, labels, k, config.keep_highest)
    return select(scores, k, config.keep_highest)


def fraction_to_k(fraction: float, n: int) -> int:
    """Round-half-up of fraction * n, clamped to [1, n]."""
    k = int(math.floor(fraction * n + 0.5))
    return min(max(k, 1), n)


def pipeline_scores(alpha: Sequence[float], ranks: RankMatrix, config: RepsConfig) -> np.ndarray:
    """
    Scores the fit pipeline ranks prototypes by.

    With invert_alpha the weight is read as w = beta^-alpha: a heavy
    prototype is barely degraded, and the score is the negated best
    adjusted rank, alpha - min rank. Otherwise score_prototypes as is.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if config.invert_alpha:
        return -score_prototypes(-alpha, ranks)
    return score_prototypes(alpha, ranks)


def score_instances(D: DistanceMatrix, labels: Sequence[int],
                    config: RepsConfig) -> Tuple[RankMatrix, RepsProblem, RepsSolution, np.ndarray]:
    ranks = compute_ranks(D)
    problem = build_problem(ranks, labels, config)
    solution = solve(problem)
    scores = pipeline_scores(solution.alpha, ranks, config)
    logger.debug(f"Scored {ranks.n} instances: objective {solution.objective:.6g}, "
                 f"{solution.iterations} iterations, converged={solution.converged}")
    return ranks, problem, solution, scores


def fit_prototypes(D: DistanceMatrix, labels: Sequence[int], config: RepsConfig,
                   k: int) -> Tuple[RepsSolution, PrototypeSet]:
    """Train on every instance of D and keep k prototypes."""
    _, _, solution, scores = score_instances(D, labels, config)
    return solution, choose_k(scores, labels, k, config)


def _clean_fractions(candidate_fractions: Sequence[float]) -> List[float]:
    fractions = sorted(set(float(f) for f in candidate_fractions))
    if not fractions:
        raise InvalidConfig("no candidate fractions given")
    bad = [f for f in fractions if not 0.0 < f <= 1.0]
    if bad:
        raise InvalidConfig(f"candidate fractions must lie in (0, 1], got {bad[0]}")
    return fractions


def holdout_fraction_errors(D: DistanceMatrix, labels: np.ndarray, train: np.ndarray,
                            test: np.ndarray, config: RepsConfig,
                            fractions: Sequence[float]) -> Tuple[List[float], bool]:
    """
    Train on `train`, then test ERR for each selection rate in `fractions`.

    Returns:
        (errors aligned with fractions, whether the solver converged)
    """
    train_labels = labels[train]
    if len(np.unique(train_labels)) < 2:
        # any subset of a one-class fold predicts that class
        logger.warning(f"Training fold of {len(train)} holds a single class; "
                       f"scoring every rate with the label-only rule")
        err = evaluate_error(D, train, labels, test)
        return [err] * len(fractions), True

    # scores do not depend on k, so one solve serves every fraction
    _, _, solution, scores = score_instances(D.submatrix(train), train_labels, config)
    errors = []
    for f in fractions:
        chosen = choose_k(scores, train_labels, fraction_to_k(f, len(train)), config)
        errors.append(evaluate_error(D, train[chosen.selected], labels, test))
    return errors, solution.converged


def cv_fraction_errors(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig,
                       fractions: Sequence[float], folds: int = 5,
                       seed: int = 0) -> Dict[float, float]:
    """
    Mean validation ERR per candidate fraction under stratified k-fold CV.

    Args:
        ds: Training data (labels must align with D)
        D: Distance matrix over ds
        fractions: Candidate selection rates in (0, 1]
        folds: Inner fold count, capped at the largest class size

    Returns:
        {fraction: mean validation error}
    """
    if D.n != ds.n:
        raise DimensionMismatch(f"matrix has {D.n} rows for {ds.n} instances")
    fractions = _clean_fractions(fractions)
    inner = min(folds, max_fold_count(ds))
    if inner < 2:
        raise InvalidFoldCount(f"{ds.n} instances with no class of two or more cannot be cross validated")
    if inner < folds:
        logger.info(f"Inner CV on {ds.name} uses {inner} folds (largest class has {inner})")
    plan = kfold_split(ds, inner, seed)
    labels = np.asarray(ds.labels)

    tasks = [(holdout_fraction_errors, (D, labels, train, test, config, fractions), {})
             for train, test in plan.folds()]
    per_fold = np.array([errors for errors, _ in run_concurrent(tasks)])
    means = per_fold.mean(axis=0)
    return {f: float(e) for f, e in zip(fractions, means)}


def select_by_cv(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig,
                 candidate_fractions: Sequence[float], folds: int = 5,
                 seed: int = 0) -> PrototypeSet:
    """Pick the selection rate by inner CV, then retrain on all of ds."""
    fractions = _clean_fractions(candidate_fractions)
    errors: Optional[Dict[float, float]] = None
    if len(fractions) == 1:
        best = fractions[0]
    else:
        errors = cv_fraction_errors(ds, D, config, fractions, folds, seed)
        # sorted ascending, so min() keeps the smallest fraction on ties
        best = min(fractions, key=lambda f: errors[f])
        logger.info(f"CV sizing on {ds.name}: " +
                    ", ".join(f"{f:g}->{errors[f]:.4f}" for f in fractions) + f"; chose {best:g}")

    solution, chosen = fit_prototypes(D, ds.labels, config, fraction_to_k(best, ds.n))
    return PrototypeSet(selected=chosen.selected, scores=chosen.scores, k=chosen.k,
                        fraction=best, cv_errors=errors, solution=solution)
