"""
Report and artifact writers.

Everything written here is deterministic: rows are sorted, no timestamps,
floats at 17 significant digits in both CSV and JSON.
"""
import json
import logging
import math
import os
import re
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from reps.services.distance import DistanceMatrix
from reps.services.errors import EmptyInput, IoError, ParseError
from reps.services.evaluation import EvalRecord, pareto_ranks_by_dataset
from reps.services.knn import nearest_prototypes
from reps.services.prototypes import PrototypeSet
from reps.services.ranking import RankMatrix
from reps.services.solvers import RepsSolution

logger = logging.getLogger(__name__)

REPORT_FIELDS = ["method", "dataset", "err", "slr", "pareto_rank",
                 "beta", "C", "solver", "seed", "k", "n_train"]

FLOAT_FORMAT = "%.17g"

# floats travel through json.dumps as marked strings (NUL is escaped as \u0000)
_FLOAT_MARK = "\x00f17:"
_MARKED_FLOAT = re.compile(r'"\\u0000f17:([^"]+)"')

# one fill colour per class, cycled
_CLASS_COLORS = ["lightblue", "lightsalmon", "palegreen", "khaki", "plum",
                 "lightgray", "lightpink", "aquamarine", "wheat", "lightcyan"]


def _is_json(path: str) -> bool:
    return os.path.splitext(path)[1].lower() == ".json"


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def _float_token(x: float) -> str:
    text = f"{x:.17g}"
    if not any(ch in text for ch in ".e"):
        text += ".0"
    return _FLOAT_MARK + text


def _mark_floats(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _mark_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_mark_floats(v) for v in value]
    if isinstance(value, float) and math.isfinite(value):
        return _float_token(value)
    return value


def json_text(payload: Any) -> str:
    """Indented JSON with every finite float written at 17 significant digits."""
    text = json.dumps(_mark_floats(payload), indent=2, ensure_ascii=False)
    return _MARKED_FLOAT.sub(r"\1", text) + "\n"


def csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def write_json(path: str, payload: Any) -> None:
    _write_text(path, json_text(payload))


def _write_csv(frame: pd.DataFrame, path: str) -> None:
    _write_text(path, csv_text(frame))


def _clean(value: Any) -> Any:
    """numpy scalars to Python, NaN to None."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


# ------------------------------------------------------------------
# Evaluation reports
# ------------------------------------------------------------------
def report_rows(records: Sequence[EvalRecord]) -> List[Dict[str, Any]]:
    """Report rows with pareto_rank filled in per dataset, sorted by (dataset, method)."""
    records = list(records)
    if not records:
        raise EmptyInput("no records to report")
    ranks = pareto_ranks_by_dataset(records)
    rows = []
    for record, rank in zip(records, ranks):
        row = record.model_dump()
        row["pareto_rank"] = rank
        rows.append({key: row.get(key) for key in REPORT_FIELDS})
    rows.sort(key=lambda r: (r["dataset"], r["method"], r["err"], r["slr"]))
    return rows


def emit_report(records: Sequence[EvalRecord], json_path: Optional[str] = None,
                csv_path: Optional[str] = None) -> List[Dict[str, Any]]:
    """
    Write the JSON array and/or CSV table of evaluation records.

    Returns:
        The rows written
    """
    rows = report_rows(records)
    if json_path:
        write_json(json_path, rows)
        logger.info(f"Wrote {len(rows)} records to {json_path}")
    if csv_path:
        _write_csv(pd.DataFrame(rows, columns=REPORT_FIELDS), csv_path)
        logger.info(f"Wrote {len(rows)} records to {csv_path}")
    return rows


def _load_rows(path: str) -> List[Dict[str, Any]]:
    if not os.path.exists(path):
        raise IoError(f"records file not found: {path}")
    try:
        if _is_json(path):
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
            if isinstance(payload, dict):
                payload = payload.get("rows", [])
            if not isinstance(payload, list):
                raise ParseError(f"{path}: expected a JSON array of records")
            return payload
        frame = pd.read_csv(path, dtype={"method": str, "dataset": str, "solver": str},
                            float_precision="round_trip")
        return [{k: _clean(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(f"cannot read {path}: {e}") from None
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"{path}: {e}") from None


def read_records(path: str) -> List[EvalRecord]:
    """Records from a report CSV or JSON file (extra columns are ignored)."""
    records = []
    for i, row in enumerate(_load_rows(path), start=1):
        row = {k: v for k, v in row.items() if v is not None and v != ""}
        try:
            records.append(EvalRecord(**row))
        except (ValidationError, TypeError) as e:
            raise ParseError(f"{path}: invalid record: {e}", row=i) from None
    if not records:
        raise EmptyInput(f"{path} holds no records")
    return records


def append_pareto_column(in_path: str, out_path: Optional[str] = None) -> str:
    """
    Records file with a pareto_rank column added (or replaced).

    Other columns are passed through untouched. The result is written to
    out_path when given and returned as text either way.
    """
    records = read_records(in_path)
    ranks = pareto_ranks_by_dataset(records)
    if _is_json(in_path):
        rows = _load_rows(in_path)
        for row, rank in zip(rows, ranks):
            row["pareto_rank"] = rank
        text = json_text(rows)
    else:
        try:
            frame = pd.read_csv(in_path, dtype=str, keep_default_na=False)
        except (OSError, ValueError) as e:
            raise IoError(f"cannot read {in_path}: {e}") from None
        frame["pareto_rank"] = [str(r) for r in ranks]
        text = csv_text(frame)
    if out_path:
        _write_text(out_path, text)
    logger.info(f"Ranked {len(records)} records from {in_path}")
    return text


def write_table(rows: Sequence[Dict[str, Any]], columns: Sequence[str], path: Optional[str] = None,
                metadata: Optional[Dict[str, Any]] = None, as_json: bool = False) -> str:
    """
    Sweep / FSR tables as CSV, or JSON (with an optional metadata block).

    JSON is chosen by a .json path or as_json. Returns the text.
    """
    rows = [{c: _clean(r.get(c)) for c in columns} for r in rows]
    if as_json or (path and _is_json(path)):
        text = json_text({"metadata": metadata, "rows": rows} if metadata else rows)
    else:
        text = csv_text(pd.DataFrame(rows, columns=list(columns)))
    if path:
        _write_text(path, text)
    return text


# ------------------------------------------------------------------
# Selection artifacts
# ------------------------------------------------------------------
def solution_payload(solution: RepsSolution, prototypes: PrototypeSet,
                     metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    xi = solution.xi.tolist() if isinstance(solution.xi, np.ndarray) else float(solution.xi)
    payload = {
        "solver": solution.solver,
        "objective": solution.objective,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "k": prototypes.k,
        "selected": [int(i) for i in prototypes.selected],
        "w": solution.w.tolist(),
        "alpha": solution.alpha.tolist(),
        "xi": xi,
        "scores": prototypes.scores.tolist(),
    }
    if prototypes.fraction is not None:
        payload["fraction"] = prototypes.fraction
    if metadata:
        payload["metadata"] = metadata
    return payload


def dump_solution(solution: RepsSolution, prototypes: PrototypeSet, path: str,
                  metadata: Optional[Dict[str, Any]] = None) -> None:
    write_json(path, solution_payload(solution, prototypes, metadata))


def write_selected(selected: Sequence[int], path: str) -> None:
    """Selected indices, one per line."""
    _write_text(path, "".join(f"{int(i)}\n" for i in selected))


def dump_ranks(ranks: RankMatrix, path: str) -> None:
    _write_csv(ranks.to_frame(), path)


def nn_graph_dot(D: DistanceMatrix, labels: Sequence[int], selected: Sequence[int],
                 label_names: Sequence[str] = ()) -> str:
    """
    DOT digraph of leave-one-out nearest-neighbour relations.

    One node per instance, filled by class; pruned instances are dashed.
    Edge i -> j when j is the nearest other instance to i.
    """
    labels = np.asarray(labels)
    everyone = np.arange(D.n)
    neighbors, _ = nearest_prototypes(D, everyone, everyone)
    kept = set(int(i) for i in selected)

    lines = ["digraph G {", "    splines=true;", "    overlap=scalexy;"]
    for i in range(D.n):
        c = int(labels[i])
        name = label_names[c] if c < len(label_names) else str(c)
        name = str(name).replace('"', '\\"')
        attrs = [
            f'label="{i}"',
            f'class="{name}"',
            f'fillcolor="{_CLASS_COLORS[c % len(_CLASS_COLORS)]}"',
            'style="filled,solid"' if i in kept else 'style="filled,dashed"',
        ]
        lines.append(f"    n{i} [{','.join(attrs)}];")
    for i in range(D.n):
        lines.append(f"    n{i} -> n{int(neighbors[i])};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_nn_graph(D: DistanceMatrix, labels: Sequence[int], selected: Sequence[int], path: str,
                    label_names: Sequence[str] = ()) -> str:
    text = nn_graph_dot(D, labels, selected, label_names)
    _write_text(path, text)
    logger.info(f"Wrote nearest-neighbour graph ({D.n} nodes) to {path}")
    return text
