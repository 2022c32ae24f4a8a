"""
reps command line.

    python -m reps select --input iris.csv --label-col 4 --k 22 --out sol.json
    python -m reps eval --input ECG200_TRAIN.tsv --test ECG200_TEST.tsv --kind ucr --fraction 0.88
    python -m reps pareto --records results.csv --out ranked.csv

Exit status: 0 success, 1 usage error, 2 data error, 3 non-convergence (--strict).
"""
import os
import sys
import logging
import argparse
from typing import List, Literal, Optional, Sequence

from pydantic import BaseModel, Field, ValidationError

from reps.jobs import JOBS
from reps.services.errors import InvalidConfig, MetricMismatch, NotConverged, RepsError, UsageError
from reps.services.evaluation import DEFAULT_FRACTIONS
from reps.services.executor import close_executor
from reps.services.settings import SOLVERS, get_log_level

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("select", "eval", "cv", "sweep-beta", "pareto", "graph", "fsr")
DEFAULT_BETAS = (1.5, 2.0, 3.0, 4.0)


class RunSpec(BaseModel):
    """Validated flags of one invocation."""
    subcommand: Literal["select", "eval", "cv", "sweep-beta", "pareto", "graph", "fsr"]
    inputs: List[str] = []
    test: Optional[str] = None
    kind: Literal["vectors", "ucr", "distmatrix"] = "vectors"
    label_col: int = 0
    skip_header: bool = False
    metric: Optional[Literal["euclidean", "dtw"]] = None
    window: Optional[int] = Field(None, ge=0)

    beta: Optional[float] = None
    C: Optional[float] = None
    epsilon: Optional[float] = None
    solver: Optional[Literal["projected_gradient", "cutting_plane"]] = None
    max_iterations: Optional[int] = None
    weight_floor: Optional[float] = None
    keep_lowest: bool = False
    literal_alpha: bool = False
    global_selection: bool = False

    k: Optional[int] = Field(None, ge=1)
    fraction: Optional[float] = Field(None, gt=0.0, le=1.0)
    fractions: List[float] = list(DEFAULT_FRACTIONS)
    folds: Optional[int] = None
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    betas: List[float] = list(DEFAULT_BETAS)
    targets: List[float] = []
    records: Optional[str] = None

    out: Optional[str] = None
    report_csv: Optional[str] = None
    selected_out: Optional[str] = None
    dump_ranks: Optional[str] = None
    dump_matrix: Optional[str] = None
    strict: bool = False
    threads: Optional[int] = Field(None, ge=1)


def check_run_spec(spec: RunSpec) -> None:
    """Flag combinations, checked before any data is read."""
    cmd = spec.subcommand
    if cmd == "pareto":
        if not spec.records:
            raise UsageError("pareto needs --records")
        return
    if not spec.inputs:
        raise UsageError(f"{cmd} needs --input")
    if cmd != "sweep-beta" and len(spec.inputs) > 1:
        raise UsageError(f"{cmd} takes a single --input")
    if spec.k is not None and spec.fraction is not None:
        raise UsageError("--k and --fraction are mutually exclusive")
    if spec.kind == "distmatrix":
        if spec.metric is not None or spec.window is not None:
            raise MetricMismatch("--metric/--window do not apply to a precomputed distance matrix")
        if spec.test:
            raise UsageError("--test is not supported with a distance matrix input")
    elif spec.metric is not None:
        expected = "euclidean" if spec.kind == "vectors" else "dtw"
        if spec.metric != expected:
            raise MetricMismatch(f"metric {spec.metric} does not apply to {spec.kind} input")
    if cmd == "graph" and not spec.out:
        raise UsageError("graph needs --out")
    if cmd == "fsr" and not spec.targets:
        raise UsageError("fsr needs --targets")
    if any(not 0.0 < f <= 1.0 for f in spec.fractions + spec.targets):
        raise InvalidConfig("fractions and target rates must lie in (0, 1]")
    if any(b <= 1.0 for b in spec.betas):
        raise InvalidConfig("every --betas value must be > 1")


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reps", description="Large-margin prototype selection for 1-NN classification")
    sub = parser.add_subparsers(dest="subcommand", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    helps = {
        "select": "train and write the selected prototypes",
        "eval": "compare REPS against NoPS (k-fold CV or train/test split)",
        "cv": "choose the selection rate by cross validation",
        "sweep-beta": "ERR / SLR / LOR for a grid of beta values",
        "pareto": "append Pareto ranks to a records file",
        "graph": "export the nearest-neighbour relation graph (DOT)",
        "fsr": "REPS error at fixed competitor selection rates",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        if name == "pareto":
            p.add_argument("--records", required=True, help="report CSV or JSON to rank")
            p.add_argument("--out", help="output file (default: stdout)")
            continue

        data = p.add_argument_group("data")
        data.add_argument("--input", dest="inputs", action="append", required=True,
                          help="training data file" + (" (repeatable)" if name == "sweep-beta" else ""))
        data.add_argument("--test", help="test file; enables the train/test protocol")
        data.add_argument("--kind", choices=["vectors", "ucr", "distmatrix"], default="vectors")
        data.add_argument("--label-col", type=int, default=0, help="label column of a vector CSV (negative counts from the end)")
        data.add_argument("--skip-header", action="store_true", help="vector CSV has a header row")
        data.add_argument("--metric", choices=["euclidean", "dtw"], help="default: euclidean for vectors, dtw for ucr")
        data.add_argument("--window", type=int, help="DTW band half-width (default 5)")

        model = p.add_argument_group("model")
        model.add_argument("--beta", type=float, help="rank decay base, > 1 (default 2)")
        model.add_argument("--C", dest="C", type=float, help="trade-off, >= 0 (default 0.001)")
        model.add_argument("--epsilon", type=float, help="cutting-plane relative objective gap (default 1e-4)")
        model.add_argument("--solver", choices=list(SOLVERS))
        model.add_argument("--max-iterations", type=int)
        model.add_argument("--weight-floor", type=float, help="floor applied to w before the logarithm")
        model.add_argument("--keep-lowest", action="store_true", help="keep the lowest scores instead of the highest")
        model.add_argument("--literal-alpha", action="store_true",
                           help="score with alpha = log_beta(w) as is, not its inverse reading")
        model.add_argument("--global-selection", action="store_true",
                           help="take the top k over all classes instead of per-class quotas")

        sizing = p.add_argument_group("sizing and protocol")
        size = sizing.add_mutually_exclusive_group()
        size.add_argument("--k", type=int, help="number of prototypes")
        size.add_argument("--fraction", type=float, help="selection rate in (0, 1]")
        sizing.add_argument("--fractions", type=float, nargs="+", default=list(DEFAULT_FRACTIONS),
                            help="CV candidates when neither --k nor --fraction is given")
        sizing.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
        sizing.add_argument("--seed", type=int, help="fold shuffling seed (default 0)")
        if name == "sweep-beta":
            sizing.add_argument("--betas", type=float, nargs="+", default=list(DEFAULT_BETAS))
        if name == "fsr":
            sizing.add_argument("--targets", type=float, nargs="+", required=True,
                                help="competitor selection rates")

        out = p.add_argument_group("output")
        out.add_argument("--out", help="main output file (default: stdout)")
        if name == "eval":
            out.add_argument("--report-csv", help="also write the report as CSV")
        if name in ("select", "cv"):
            out.add_argument("--selected-out", help="selected indices, one per line")
        if name == "select":
            out.add_argument("--dump-ranks", help="leave-one-out rank matrix as CSV")
        out.add_argument("--dump-matrix", help="distance matrix in the distance-CSV input format")
        out.add_argument("--strict", action="store_true", help="exit 3 when a solver does not converge")
        out.add_argument("--threads", type=int, help="worker threads (overrides REPS_THREADS)")
    return parser


def parse_run_spec(argv: Optional[Sequence[str]] = None) -> RunSpec:
    args = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(args).items() if v is not None}
    try:
        spec = RunSpec(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise InvalidConfig(f"{where}: {first.get('msg')}") from None
    check_run_spec(spec)
    return spec


def run(spec: RunSpec) -> int:
    if spec.threads is not None:
        os.environ["REPS_THREADS"] = str(spec.threads)
    converged = JOBS[spec.subcommand](spec)
    if spec.strict and not converged:
        raise NotConverged(f"{spec.subcommand}: solver stopped at its iteration cap")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=get_log_level(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = parse_run_spec(argv)
        return run(spec)
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except RepsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        close_executor()


if __name__ == "__main__":
    sys.exit(main())
