"""
Quadratic-programming solvers for the degradation weights.

Both solvers minimise the same n-slack objective

    ||w||^2 + C * sum_i max(0, rho_i - w . r_i)      subject to  w >= 0

so their objectives are directly comparable:
  - projected gradient: works on the box-constrained dual
        max_{0 <= lam <= C}  lam . rho - 1/4 ||[R^T lam]_+||^2
    whose primal image w = 1/2 [R^T lam]_+ lies in the nonnegative orthant,
    followed by a short primal projected-subgradient polish.
  - cutting plane: the one-slack working-set method; each restricted QP
    is solved with SLSQP over (w, xi).
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Set, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from reps.services.settings import RepsConfig

logger = logging.getLogger(__name__)

# relative duality gap that counts as converged
_GAP_TOL = 1e-9
# stall rule: relative change below _STALL_TOL for _STALL_STEPS consecutive steps
_STALL_TOL = 1e-9
_STALL_STEPS = 50
_POLISH_STEPS = 200
_INNER_MAX_ITER = 500
_INNER_FTOL = 1e-14


@dataclass(frozen=True)
class RepsProblem:
    """Exponential-rank feature rows r_i, margins rho_i and the run config."""
    r: np.ndarray
    rho: np.ndarray
    labels: np.ndarray
    config: RepsConfig

    @property
    def n(self) -> int:
        return len(self.rho)


@dataclass(frozen=True)
class RepsSolution:
    w: np.ndarray
    xi: Union[np.ndarray, float]
    alpha: np.ndarray
    objective: float
    iterations: int
    converged: bool
    solver: str


def extract_alpha(w, beta: float, floor: float) -> np.ndarray:
    """Degradation parameters: log base beta of the floored weights."""
    w = np.asarray(w, dtype=np.float64)
    return np.log(np.maximum(w, floor)) / math.log(beta)


def objective(p: RepsProblem, w) -> float:
    """||w||^2 + C * sum of hinge violations."""
    w = np.asarray(w, dtype=np.float64)
    hinge = np.maximum(p.rho - p.r @ w, 0.0)
    return float(w @ w + p.config.C * hinge.sum())


def objective_subgradient(p: RepsProblem, w) -> np.ndarray:
    """
    Subgradient of `objective` at w; the true gradient wherever no
    constraint sits exactly on its margin.
    """
    w = np.asarray(w, dtype=np.float64)
    violated = (p.rho - p.r @ w) > 0
    return 2.0 * w - p.config.C * (violated.astype(np.float64) @ p.r)


def _n_slack_solution(p: RepsProblem, w: np.ndarray, iterations: int, converged: bool) -> RepsSolution:
    xi = np.maximum(p.rho - p.r @ w, 0.0)
    obj = float(w @ w + p.config.C * xi.sum())
    alpha = extract_alpha(w, p.config.beta, p.config.weight_floor)
    return RepsSolution(w, xi, alpha, obj, iterations, converged, "projected_gradient")


def _polish(p: RepsProblem, w: np.ndarray, obj: float) -> Tuple[np.ndarray, float]:
    """Primal projected-subgradient steps, accepted only when the objective drops."""
    row_norm = float(np.max(np.linalg.norm(p.r, axis=1))) if p.n else 0.0
    step = 1.0 / (2.0 + p.config.C * row_norm)
    for _ in range(_POLISH_STEPS):
        candidate = np.maximum(w - step * objective_subgradient(p, w), 0.0)
        cand_obj = objective(p, candidate)
        if cand_obj < obj:
            w, obj = candidate, cand_obj
        else:
            step *= 0.5
            if step < 1e-14:
                break
    return w, obj


def solve_projected_gradient(p: RepsProblem) -> RepsSolution:
    """Constrained gradient method on the n-slack problem."""
    cfg = p.config
    n = p.n
    C = cfg.C
    if C == 0 or not np.any(p.rho > 0):
        return _n_slack_solution(p, np.zeros(n), 0, True)

    R, rho = p.r, p.rho
    lipschitz = np.linalg.norm(R, 2) ** 2 / 2.0
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0

    lam = np.zeros(n)
    y = lam.copy()
    t = 1.0
    dual = 0.0
    best_w = np.zeros(n)
    best_obj = objective(p, best_w)

    stall = 0
    converged = False
    it = 0
    for it in range(1, cfg.iteration_cap + 1):
        w_y = 0.5 * np.maximum(R.T @ y, 0.0)
        lam_next = np.clip(y + step * (rho - R @ w_y), 0.0, C)
        w_next = 0.5 * np.maximum(R.T @ lam_next, 0.0)
        dual_next = float(lam_next @ rho - w_next @ w_next)

        if dual_next < dual - 1e-15 * max(1.0, abs(dual)):
            if t > 1.0:
                # momentum overshot: restart from the last accepted point
                y, t = lam.copy(), 1.0
            else:
                step *= 0.5
            continue

        obj_next = objective(p, w_next)
        prev_best, prev_dual = best_obj, dual
        if obj_next < best_obj:
            best_obj, best_w = obj_next, w_next

        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = lam_next + ((t - 1.0) / t_next) * (lam_next - lam)
        lam, t, dual = lam_next, t_next, dual_next

        if best_obj - dual <= _GAP_TOL * max(1.0, abs(best_obj)):
            converged = True
            break
        primal_flat = prev_best - best_obj <= _STALL_TOL * max(1.0, abs(best_obj))
        dual_flat = dual - prev_dual <= _STALL_TOL * max(1.0, abs(dual))
        stall = stall + 1 if (primal_flat and dual_flat) else 0
        if stall >= _STALL_STEPS:
            converged = True
            break

    w, _ = _polish(p, best_w, best_obj)
    if not converged:
        logger.warning(f"Projected gradient stopped after {it} iterations without converging")
    logger.debug(f"Projected gradient: {it} iterations, gap {best_obj - dual:.3e}")
    return _n_slack_solution(p, w, it, converged)


# ------------------------------------------------------------------
# Cutting plane
# ------------------------------------------------------------------
def _restricted_slack(G: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    return float(max(0.0, np.max(b - G @ w)))


def _solve_restricted(G: np.ndarray, b: np.ndarray, cap: float,
                      w0: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    min 1/2 ||w||^2 + cap * xi  s.t. w >= 0, xi >= 0, G w >= b - xi.

    SLSQP over x = (w, xi), started from w0 with the smallest feasible xi.

    Returns:
        (w, xi) with w clipped to the orthant and xi its exact working-set slack
    """
    m, n = G.shape
    x0 = np.append(np.maximum(w0, 0.0), _restricted_slack(G, b, w0))
    coupled = np.hstack([G, np.ones((m, 1))])

    res = minimize(
        lambda x: 0.5 * float(x[:n] @ x[:n]) + cap * x[n],
        x0,
        jac=lambda x: np.append(x[:n], cap),
        method="SLSQP",
        bounds=[(0.0, None)] * (n + 1),
        constraints=[{"type": "ineq", "fun": lambda x: coupled @ x - b, "jac": lambda x: coupled}],
        options={"maxiter": _INNER_MAX_ITER, "ftol": _INNER_FTOL},
    )
    if not res.success:
        logger.debug(f"Restricted QP over {m} cuts: {res.message}")
    w = np.maximum(res.x[:n], 0.0)
    return w, _restricted_slack(G, b, w)


def solve_cutting_plane(p: RepsProblem) -> RepsSolution:
    """
    One-slack cutting-plane training.

    The working set holds aggregated cuts c (c_i = 1 iff w . r_i < rho_i).
    The one-slack trade-off is n*C/2 so the minimiser matches the n-slack
    problem. The restricted optimum bounds the n-slack optimum from below,
    so C * n * (violation - working slack) bounds the distance of the
    objective from it; the loop stops once that is within epsilon of the
    objective, or when the most violated cut is already in the working set.
    The returned xi is the exact one-slack value at w and
    objective = ||w||^2 + C * n * xi.
    """
    cfg = p.config
    n = p.n
    R, rho = p.r, p.rho
    cap = cfg.C * n / 2.0

    cuts: List[np.ndarray] = []
    offsets: List[float] = []
    masks: Set[bytes] = set()
    w = np.zeros(n)
    xi_ws = 0.0
    best_w, best_obj = w, math.inf
    converged = False
    it = 0
    for it in range(1, cfg.iteration_cap + 1):
        if cuts:
            w, xi_ws = _solve_restricted(np.array(cuts), np.array(offsets), cap, w)

        hinge = np.maximum(rho - R @ w, 0.0)
        violation = float(hinge.sum()) / n
        obj = float(w @ w + cfg.C * n * violation)
        if obj < best_obj:
            best_w, best_obj = w, obj

        gap = cfg.C * n * max(violation - xi_ws, 0.0)
        logger.debug(f"Cut {it}: objective {obj:.6e}, gap {gap:.3e}")
        if gap <= cfg.epsilon * obj:
            converged = True
            break

        c = hinge > 0
        key = np.packbits(c).tobytes()
        if key in masks:
            # already constrained; only the restricted solve's rounding is left
            converged = True
            break
        masks.add(key)
        cuts.append((c.astype(np.float64) @ R) / n)
        offsets.append(float(c @ rho) / n)

    if not converged:
        logger.warning(f"Cutting plane stopped after {it} cuts without converging")

    w = best_w
    xi = float(np.maximum(rho - R @ w, 0.0).sum() / n)
    obj = float(w @ w + cfg.C * n * xi)
    alpha = extract_alpha(w, cfg.beta, cfg.weight_floor)
    return RepsSolution(w, xi, alpha, obj, it, converged, "cutting_plane")


def solve(p: RepsProblem) -> RepsSolution:
    """Dispatch on config.solver."""
    if p.config.solver == "cutting_plane":
        return solve_cutting_plane(p)
    return solve_projected_gradient(p)
