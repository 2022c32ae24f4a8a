"""
Evaluation measures and protocol runners.

ERR and SLR per method, the fixed-selection-rate (FSR) comparison, the
log odds ratio (LOR) trade-off, dominance and Pareto ranking, plus the
cross-validation / hold-out loops that produce them.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from reps.services.dataset import LabeledDataset, holdout_split, kfold_split
from reps.services.distance import DistanceMatrix
from reps.services.errors import DatasetMismatch, EmptyInput, InvalidConfig, InvalidK, UndefinedLOR
from reps.services.executor import run_concurrent
from reps.services.knn import evaluate_error
from reps.services.prototypes import (
    fit_prototypes,
    fraction_to_k,
    holdout_fraction_errors,
    select_by_cv,
)
from reps.services.settings import RepsConfig

logger = logging.getLogger(__name__)

Split = Tuple[np.ndarray, np.ndarray]

# default candidate rates for CV sizing
DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.5, 0.75, 1.0)


class EvalRecord(BaseModel):
    """One (method, dataset) result with the run settings that produced it."""
    model_config = ConfigDict(extra="ignore")

    method: str
    dataset: str
    err: float = Field(ge=0.0, le=1.0)
    slr: float = Field(gt=0.0, le=1.0)
    beta: Optional[float] = None
    C: Optional[float] = None
    solver: Optional[str] = None
    seed: Optional[int] = None
    k: Optional[int] = None
    n_train: Optional[int] = None


@dataclass(frozen=True)
class ParetoRanking:
    """Ranks aligned with the input records; fronts[0] is the non-dominated set."""
    ranks: Tuple[int, ...]
    fronts: List[List[int]] = field(default_factory=list)

    def rank_of(self, i: int) -> int:
        return self.ranks[i]


@dataclass(frozen=True)
class FoldResult:
    fold: int
    n_train: int
    k: int
    err_reps: float
    err_nops: float
    converged: bool = True

    @property
    def slr(self) -> float:
        return self.k / self.n_train


# ------------------------------------------------------------------
# Measures
# ------------------------------------------------------------------
def selection_rate(k: int, n_train: int) -> float:
    if not 1 <= k <= n_train:
        raise InvalidK(f"k={k} must lie in [1, {n_train}]")
    return k / n_train


def _odds(p: float) -> float:
    return p / (1.0 - p)


def log_odds_ratio(err: float, slr: float, err_nops: float) -> float:
    """
    ln( O(slr) * O(err) / O(err - err_nops) ) with O(p) = p / (1 - p).

    Raises UndefinedLOR unless every odds argument lies strictly inside (0, 1).
    """
    gap = err - err_nops
    for name, p in (("slr", slr), ("err", err), ("err - err_nops", gap)):
        if not 0.0 < p < 1.0:
            raise UndefinedLOR(f"{name}={p:g} is outside (0, 1)")
    return math.log(_odds(slr) * _odds(err) / _odds(gap))


def dominates(a: EvalRecord, b: EvalRecord) -> bool:
    """True iff a is no worse than b in ERR and SLR and strictly better in one."""
    if a.dataset != b.dataset:
        raise DatasetMismatch(f"cannot compare records of {a.dataset!r} and {b.dataset!r}")
    return a.err <= b.err and a.slr <= b.slr and (a.err < b.err or a.slr < b.slr)


def pareto_rank(records: Sequence[EvalRecord]) -> ParetoRanking:
    """
    Frontier peeling by fast non-dominated sorting.

    For each record p keep the records p dominates and the count of records
    dominating p; the first front is every zero-count record, and each
    later front collects records whose count drops to zero once the
    previous front is removed.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records to rank")
    names = {r.dataset for r in records}
    if len(names) > 1:
        raise DatasetMismatch(f"records span several datasets: {sorted(names)}")

    n = len(records)
    dominated_by_me: List[List[int]] = [[] for _ in range(n)]
    count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(records[i], records[j]):
                dominated_by_me[i].append(j)
                count[j] += 1
            elif dominates(records[j], records[i]):
                dominated_by_me[j].append(i)
                count[i] += 1

    fronts = [[i for i in range(n) if count[i] == 0]]
    while fronts[-1]:
        next_front = []
        for p in fronts[-1]:
            for q in dominated_by_me[p]:
                count[q] -= 1
                if count[q] == 0:
                    next_front.append(q)
        fronts.append(sorted(next_front))
    fronts.pop()

    ranks = [0] * n
    for depth, front in enumerate(fronts, start=1):
        for i in front:
            ranks[i] = depth
    return ParetoRanking(ranks=tuple(ranks), fronts=fronts)


def pareto_ranks_by_dataset(records: Sequence[EvalRecord]) -> List[int]:
    """Pareto rank of every record, ranked within its own dataset."""
    ranks = [0] * len(records)
    groups: Dict[str, List[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.dataset, []).append(i)
    for members in groups.values():
        ranking = pareto_rank([records[i] for i in members])
        for pos, i in enumerate(members):
            ranks[i] = ranking.rank_of(pos)
    return ranks


# ------------------------------------------------------------------
# Protocol runners
# ------------------------------------------------------------------
def fold_mean(values: Sequence[float]) -> float:
    """Mean over folds. All fold averages use this so identical fold errors give identical means."""
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def make_splits(ds: LabeledDataset, folds: int = 5, seed: int = 0,
                n_test: Optional[int] = None) -> List[Split]:
    """
    Train/test index pairs.

    With n_test set, ds is a concatenated (train, test) dataset and the
    single hold-out pair is returned; otherwise stratified k-fold.
    """
    if n_test is not None:
        return [holdout_split(ds.n - n_test, n_test)]
    return kfold_split(ds, folds, seed).folds()


def _single_class_fold(ds: LabeledDataset, D: DistanceMatrix, fold: int, train: np.ndarray,
                       test: np.ndarray, k: Optional[int], fraction: Optional[float],
                       fractions: Sequence[float]) -> FoldResult:
    # nothing to solve: every prototype subset predicts the one class
    size = k if k is not None else fraction_to_k(fraction if fraction is not None else min(fractions),
                                                 len(train))
    if not 1 <= size <= len(train):
        raise InvalidK(f"k={size} must lie in [1, {len(train)}]")
    labels = np.asarray(ds.labels)
    err = evaluate_error(D, train, labels, test)
    logger.warning(f"{ds.name} fold {fold}: training part holds a single class; "
                   f"keeping its first {size} instances")
    return FoldResult(fold, len(train), size, err, err, True)


def _run_fold(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, fold: int,
              train: np.ndarray, test: np.ndarray, k: Optional[int], fraction: Optional[float],
              fractions: Sequence[float], cv_folds: int, seed: int) -> FoldResult:
    labels = np.asarray(ds.labels)
    D_train = D.submatrix(train)
    if len(np.unique(labels[train])) < 2:
        return _single_class_fold(ds, D, fold, train, test, k, fraction, fractions)
    if k is not None or fraction is not None:
        size = k if k is not None else fraction_to_k(fraction, len(train))
        solution, chosen = fit_prototypes(D_train, labels[train], config, size)
        converged = solution.converged
    else:
        chosen = select_by_cv(ds.subset(train), D_train, config, fractions, cv_folds, seed)
        converged = chosen.solution.converged

    err_reps = evaluate_error(D, train[chosen.selected], labels, test)
    err_nops = evaluate_error(D, train, labels, test)
    logger.info(f"{ds.name} fold {fold}: k={chosen.k}/{len(train)} "
                f"err_reps={err_reps:.4f} err_nops={err_nops:.4f}")
    return FoldResult(fold, len(train), chosen.k, err_reps, err_nops, converged)


def run_folds(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, splits: Sequence[Split],
              k: Optional[int] = None, fraction: Optional[float] = None,
              fractions: Sequence[float] = DEFAULT_FRACTIONS, cv_folds: int = 5,
              seed: int = 0) -> List[FoldResult]:
    """
    REPS and NoPS test error on every split.

    Sizing: a fixed k, a fixed fraction of each training fold, or (when
    neither is given) inner-CV over `fractions`.
    """
    if k is not None and fraction is not None:
        raise InvalidConfig("give either k or fraction, not both")
    tasks = [(_run_fold, (ds, D, config, f, train, test, k, fraction, fractions, cv_folds, seed), {})
             for f, (train, test) in enumerate(splits)]
    return run_concurrent(tasks)


def nops_error(ds: LabeledDataset, D: DistanceMatrix, splits: Sequence[Split]) -> float:
    """Mean test ERR of 1-NN over the full training set."""
    labels = np.asarray(ds.labels)
    return fold_mean([evaluate_error(D, train, labels, test) for train, test in splits])


def reps_error(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, splits: Sequence[Split],
               **sizing: Any) -> Tuple[float, float]:
    """(mean test ERR, mean SLR) of REPS; sizing as in run_folds."""
    results = run_folds(ds, D, config, splits, **sizing)
    return (fold_mean([r.err_reps for r in results]),
            fold_mean([r.slr for r in results]))


def _check_target(target_slr: float) -> None:
    if not 0.0 < target_slr <= 1.0:
        raise InvalidConfig(f"target selection rate {target_slr} must lie in (0, 1]")


def fsr_table(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig,
              target_slrs: Sequence[float], folds: int = 5, seed: int = 0,
              splits: Optional[Sequence[Split]] = None) -> List[Dict[str, Any]]:
    """
    REPS error with its selection rate pinned to each target rate.

    Returns:
        One row per distinct target: dataset, target_slr, err_fsr, err_nops, converged (every fold)
    """
    targets = sorted(set(float(t) for t in target_slrs))
    if not targets:
        raise EmptyInput("no target selection rates given")
    for t in targets:
        _check_target(t)
    if splits is None:
        splits = make_splits(ds, folds, seed)

    labels = np.asarray(ds.labels)
    tasks = [(holdout_fraction_errors, (D, labels, train, test, config, targets), {})
             for train, test in splits]
    per_fold = run_concurrent(tasks)
    means = [fold_mean([errors[i] for errors, _ in per_fold]) for i in range(len(targets))]
    converged = all(ok for _, ok in per_fold)
    err_nops = nops_error(ds, D, splits)
    return [{"dataset": ds.name, "target_slr": t, "err_fsr": e, "err_nops": err_nops,
             "converged": converged}
            for t, e in zip(targets, means)]


def fsr_error(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, target_slr: float,
              folds: int = 5, seed: int = 0, splits: Optional[Sequence[Split]] = None) -> float:
    """Mean test ERR with k = round(target_slr * n_train) in every fold."""
    _check_target(target_slr)
    return fsr_table(ds, D, config, [target_slr], folds, seed, splits)[0]["err_fsr"]


def _sweep_point(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, beta: float,
                 splits: Sequence[Split], sizing: Dict[str, Any]) -> Dict[str, Any]:
    cfg = config.model_copy(update={"beta": beta})
    results = run_folds(ds, D, cfg, splits, **sizing)
    err = fold_mean([r.err_reps for r in results])
    slr = fold_mean([r.slr for r in results])
    err_nops = fold_mean([r.err_nops for r in results])
    try:
        lor: Optional[float] = log_odds_ratio(err, slr, err_nops)
        status = "ok"
    except UndefinedLOR as e:
        logger.info(f"{ds.name} beta={beta:g}: LOR undefined ({e})")
        lor, status = None, "undefined"
    return {"dataset": ds.name, "beta": beta, "err": err, "slr": slr,
            "err_nops": err_nops, "lor": lor, "lor_status": status,
            "converged": all(r.converged for r in results)}


def beta_sweep(ds: LabeledDataset, D: DistanceMatrix, config: RepsConfig, betas: Sequence[float],
               splits: Sequence[Split], **sizing: Any) -> List[Dict[str, Any]]:
    """
    One row per beta: dataset, beta, err, slr, err_nops, lor, lor_status, converged.

    lor is None (never NaN) when the ratio is undefined.
    """
    grid = sorted(set(float(b) for b in betas))
    if not grid:
        raise EmptyInput("no beta values given")
    bad = [b for b in grid if b <= 1.0]
    if bad:
        raise InvalidConfig(f"beta must be > 1, got {bad[0]}")
    tasks = [(_sweep_point, (ds, D, config, b, splits, sizing), {}) for b in grid]
    return run_concurrent(tasks)
