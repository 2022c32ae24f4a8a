"""
One job per subcommand.

Every job takes a validated RunSpec and returns True when all solver runs
converged (the CLI turns False into exit status 3 under --strict).
"""
import sys
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from reps.services.dataset import (
    LabeledDataset,
    concat_datasets,
    load_distance_matrix,
    load_ucr_tsv,
    load_vector_csv,
    write_distance_matrix,
)
from reps.services.distance import DistanceMatrix, check_metric, default_metric, get_or_build_matrix
from reps.services.evaluation import (
    EvalRecord,
    beta_sweep,
    fold_mean,
    fsr_table,
    make_splits,
    run_folds,
)
from reps.services.prototypes import PrototypeSet, fit_prototypes, fraction_to_k, select_by_cv
from reps.services.ranking import compute_ranks
from reps.services.report import (
    append_pareto_column,
    dump_ranks,
    dump_solution,
    emit_report,
    export_nn_graph,
    json_text,
    solution_payload,
    write_json,
    write_selected,
    write_table,
)
from reps.services.settings import RepsConfig, load_settings, make_config
from reps.services.solvers import RepsSolution

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["dataset", "beta", "err", "slr", "err_nops", "lor", "lor_status", "converged"]
FSR_COLUMNS = ["dataset", "target_slr", "err_fsr", "err_nops", "converged"]


# ── helpers ────────────────────────────────────────────────────────

def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def run_config(spec) -> RepsConfig:
    return make_config(
        beta=spec.beta,
        C=spec.C,
        epsilon=spec.epsilon,
        solver=spec.solver,
        max_iterations=spec.max_iterations,
        weight_floor=spec.weight_floor,
        keep_highest=False if spec.keep_lowest else None,
        invert_alpha=False if spec.literal_alpha else None,
        per_class=False if spec.global_selection else None,
    )


def _protocol(spec) -> Tuple[int, int, int]:
    """(window, folds, seed) with flags over resolved settings."""
    settings = load_settings()
    window = spec.window if spec.window is not None else int(settings["window"])
    folds = spec.folds if spec.folds is not None else int(settings["folds"])
    seed = spec.seed if spec.seed is not None else int(settings["seed"])
    return window, folds, seed


def load_input(spec, path: str) -> Tuple[LabeledDataset, DistanceMatrix, Optional[int]]:
    """
    Load one input (plus --test when given) and its distance matrix.

    Returns:
        (dataset, matrix, n_test); with a test file the dataset is the
        concatenation train + test and n_test counts the trailing test rows.
    """
    window, _, _ = _protocol(spec)
    n_test = None
    if spec.kind == "distmatrix":
        D, ds = load_distance_matrix(path)
    else:
        if spec.kind == "vectors":
            ds = load_vector_csv(path, spec.label_col, spec.skip_header)
            test = load_vector_csv(spec.test, spec.label_col, spec.skip_header) if spec.test else None
        else:
            ds = load_ucr_tsv(path)
            test = load_ucr_tsv(spec.test) if spec.test else None
        if test is not None:
            n_test = test.n
            ds = concat_datasets(ds, test, name=ds.name)
        metric = spec.metric or default_metric(ds.kind)
        check_metric(ds.kind, metric)
        D = get_or_build_matrix(ds, metric, window)

    if spec.dump_matrix:
        write_distance_matrix(D, ds, spec.dump_matrix)
    return ds, D, n_test


def _training_part(ds: LabeledDataset, D: DistanceMatrix,
                   n_test: Optional[int]) -> Tuple[LabeledDataset, DistanceMatrix]:
    if not n_test:
        return ds, D
    train = np.arange(ds.n - n_test)
    return ds.subset(train), D.submatrix(train)


def choose_prototypes(spec, ds: LabeledDataset, D: DistanceMatrix,
                      config: RepsConfig) -> Tuple[RepsSolution, PrototypeSet]:
    """Fixed k, fixed fraction, or CV sizing over --fractions."""
    _, folds, seed = _protocol(spec)
    if spec.k is not None or spec.fraction is not None:
        k = spec.k if spec.k is not None else fraction_to_k(spec.fraction, ds.n)
        return fit_prototypes(D, ds.labels, config, k)
    chosen = select_by_cv(ds, D, config, spec.fractions, folds, seed)
    return chosen.solution, chosen


def _metadata(spec, ds: LabeledDataset, config: RepsConfig) -> Dict[str, Any]:
    window, folds, seed = _protocol(spec)
    return {
        "dataset": ds.name,
        "n_train": ds.n,
        "kind": spec.kind,
        "metric": None if spec.kind == "distmatrix" else (spec.metric or default_metric(ds.kind)),
        "window": window,
        "beta": config.beta,
        "C": config.C,
        "solver": config.solver,
        "keep_highest": config.keep_highest,
        "invert_alpha": config.invert_alpha,
        "per_class": config.per_class,
        "folds": folds,
        "seed": seed,
    }


def _sizing(spec) -> Dict[str, Any]:
    _, folds, seed = _protocol(spec)
    return {"k": spec.k, "fraction": spec.fraction, "fractions": spec.fractions,
            "cv_folds": folds, "seed": seed}


# ── jobs ───────────────────────────────────────────────────────────

def job_select(spec) -> bool:
    """Train on the input and write the solution JSON plus selected indices."""
    ds, D, n_test = load_input(spec, spec.inputs[0])
    ds, D = _training_part(ds, D, n_test)
    config = run_config(spec)
    logger.info(f"Selecting prototypes for {ds.name} (n={ds.n}, solver={config.solver})")

    solution, chosen = choose_prototypes(spec, ds, D, config)
    metadata = _metadata(spec, ds, config)
    if spec.out:
        dump_solution(solution, chosen, spec.out, metadata)
    else:
        _emit(json_text(solution_payload(solution, chosen, metadata)))
    if spec.selected_out:
        write_selected(chosen.selected, spec.selected_out)
    if spec.dump_ranks:
        dump_ranks(compute_ranks(D), spec.dump_ranks)
    logger.info(f"Selected {chosen.k} of {ds.n} prototypes (objective {solution.objective:.6g})")
    return solution.converged


def job_eval(spec) -> bool:
    """REPS against NoPS: k-fold CV, or the given train/test split."""
    ds, D, n_test = load_input(spec, spec.inputs[0])
    config = run_config(spec)
    _, folds, seed = _protocol(spec)
    splits = make_splits(ds, folds, seed, n_test)
    results = run_folds(ds, D, config, splits, **_sizing(spec))

    n_train = int(round(np.mean([r.n_train for r in results])))
    meta = {"beta": config.beta, "C": config.C, "solver": config.solver, "seed": seed,
            "n_train": n_train}
    records = [
        EvalRecord(method="NoPS", dataset=ds.name,
                   err=fold_mean([r.err_nops for r in results]), slr=1.0,
                   k=n_train, **meta),
        EvalRecord(method="REPS", dataset=ds.name,
                   err=fold_mean([r.err_reps for r in results]),
                   slr=fold_mean([r.slr for r in results]),
                   k=int(round(np.mean([r.k for r in results]))), **meta),
    ]
    rows = emit_report(records, json_path=spec.out, csv_path=spec.report_csv)
    if not spec.out and not spec.report_csv:
        _emit(json_text(rows))
    return all(r.converged for r in results)


def job_cv(spec) -> bool:
    """Choose the selection rate by cross validation and report the curve."""
    ds, D, n_test = load_input(spec, spec.inputs[0])
    ds, D = _training_part(ds, D, n_test)
    config = run_config(spec)
    _, folds, seed = _protocol(spec)

    chosen = select_by_cv(ds, D, config, spec.fractions, folds, seed)
    payload = solution_payload(chosen.solution, chosen, _metadata(spec, ds, config))
    if chosen.cv_errors is not None:
        payload["cv_errors"] = [{"fraction": f, "err": e} for f, e in sorted(chosen.cv_errors.items())]
    if spec.out:
        write_json(spec.out, payload)
    else:
        _emit(json_text(payload))
    if spec.selected_out:
        write_selected(chosen.selected, spec.selected_out)
    return chosen.solution.converged


def job_sweep_beta(spec) -> bool:
    """Per-beta ERR / SLR / LOR table over one or more datasets."""
    config = run_config(spec)
    _, folds, seed = _protocol(spec)
    rows: List[Dict[str, Any]] = []
    for path in spec.inputs:
        ds, D, n_test = load_input(spec, path)
        splits = make_splits(ds, folds, seed, n_test)
        rows.extend(beta_sweep(ds, D, config, spec.betas, splits, **_sizing(spec)))
    rows.sort(key=lambda r: (r["dataset"], r["beta"]))

    text = write_table(rows, SWEEP_COLUMNS, spec.out, metadata={"lor_log": "natural"})
    if not spec.out:
        _emit(text)
    return all(r["converged"] for r in rows)


def job_pareto(spec) -> bool:
    """Append Pareto ranks to a records file."""
    text = append_pareto_column(spec.records, spec.out)
    if not spec.out:
        _emit(text)
    return True


def job_graph(spec) -> bool:
    """DOT graph of nearest-neighbour relations, pruned instances dashed."""
    ds, D, n_test = load_input(spec, spec.inputs[0])
    ds, D = _training_part(ds, D, n_test)
    config = run_config(spec)
    solution, chosen = choose_prototypes(spec, ds, D, config)
    export_nn_graph(D, ds.labels, chosen.selected, spec.out, ds.label_names)
    return solution.converged


def job_fsr(spec) -> bool:
    """REPS error with its selection rate pinned to each --targets rate."""
    ds, D, n_test = load_input(spec, spec.inputs[0])
    config = run_config(spec)
    _, folds, seed = _protocol(spec)
    splits = make_splits(ds, folds, seed, n_test)
    rows = fsr_table(ds, D, config, spec.targets, folds, seed, splits)
    text = write_table(rows, FSR_COLUMNS, spec.out)
    if not spec.out:
        _emit(text)
    return all(r["converged"] for r in rows)


JOBS = {
    "select": job_select,
    "eval": job_eval,
    "cv": job_cv,
    "sweep-beta": job_sweep_beta,
    "pareto": job_pareto,
    "graph": job_graph,
    "fsr": job_fsr,
}
