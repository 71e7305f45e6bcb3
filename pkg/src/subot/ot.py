"""Entropic optimal-transport solvers.

Four solvers/operations live here:

* :func:`sinkhorn` - entropic OT with both marginals fixed, log-domain
  scaling throughout so small regularization weights survive;
* :func:`partial_ot_source_weights` - the column-constrained entropic
  problem whose solution is available in closed form: the kernel
  ``exp(-C/lambda1 - 1)`` rescaled column-by-column onto the target
  marginal, giving the source masses as its row sums;
* :func:`gcg_solve` - entropic OT plus a group-sparse penalty on
  within-class column segments, minimized by generalized conditional
  gradient (linearize the penalty, solve an entropic subproblem, exact
  1-D line search on the convex combination);
* :func:`barycentric_map` - row-normalized plan applied to the target
  representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.special import logsumexp, xlogy

from .errors import DimensionMismatch, NumericalUnderflow, ZeroMassRow
from .substructure import CostMatrix

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

MASS_TOL = 1e-8


@dataclass(frozen=True)
class OtParams:
    """Solver hyper-parameters.

    ``lambda1`` weighs the entropy term of the source-weighting step,
    ``lambda_`` the entropy term of the mapping step, ``eta`` the
    group-sparse penalty.  ``tol`` doubles as the sinkhorn marginal
    residual threshold and the GCG relative-objective stopping threshold.
    """

    lambda1: float = 1.0
    lambda_: float = 1.0
    eta: float = 0.5
    max_outer: int = 20
    max_sinkhorn: int = 1000
    tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.lambda1 <= 0 or self.lambda_ <= 0:
            raise ValueError("entropic weights must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_outer < 1 or self.max_sinkhorn < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True)
class Coupling:
    """A transport plan with its marginals and per-iteration objective."""

    plan: FloatArray
    row_marginal: FloatArray
    col_marginal: FloatArray
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    residual: float = 0.0

    def __post_init__(self) -> None:
        plan = np.asarray(self.plan, dtype=np.float64)
        object.__setattr__(self, "plan", plan)
        object.__setattr__(self, "objective_trace", tuple(self.objective_trace))
        if plan.ndim != 2:
            raise DimensionMismatch("plan must be 2-D")
        if np.any(plan < 0):
            raise ValueError("plan has negative entries")
        if abs(plan.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"plan mass is {plan.sum()}, expected 1")
        if np.max(np.abs(plan.sum(axis=1) - self.row_marginal)) > MASS_TOL:
            raise ValueError("row_marginal does not match plan row sums")
        if np.max(np.abs(plan.sum(axis=0) - self.col_marginal)) > MASS_TOL:
            raise ValueError("col_marginal does not match plan column sums")


def _check_mass_vector(w: FloatArray, size: int, name: str) -> FloatArray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (size,):
        raise DimensionMismatch(f"{name} has shape {w.shape}, expected ({size},)")
    if np.any(w < 0) or abs(w.sum() - 1.0) > MASS_TOL:
        raise ValueError(f"{name} must be a probability vector")
    return w


def entropic_objective(plan: FloatArray, cost: FloatArray, lambda_: float) -> float:
    """<plan, cost> + lambda * sum plan log plan, with 0 log 0 = 0."""
    return float(np.sum(plan * cost) + lambda_ * xlogy(plan, plan).sum())


def sinkhorn(
    cost: CostMatrix,
    w_s: FloatArray,
    w_t: FloatArray,
    lambda_: float,
    tol: float = 1e-9,
    max_iter: int = 1000,
) -> Coupling:
    """Entropic OT between (w_s, w_t) by log-domain matrix scaling.

    Stops when the worst marginal violation falls below ``tol``; a run that
    exhausts ``max_iter`` returns the best iterate flagged not converged.
    """
    C = cost.values
    k_s, k_t = C.shape
    a = _check_mass_vector(w_s, k_s, "w_s")
    b = _check_mass_vector(w_t, k_t, "w_t")
    if lambda_ <= 0:
        raise ValueError("lambda_ must be > 0")

    A = -C / lambda_
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    lu = np.zeros(k_s)
    lv = np.zeros(k_t)
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        lu = log_a - logsumexp(A + lv[None, :], axis=1)
        lv = log_b - logsumexp(A + lu[:, None], axis=0)
        plan = np.exp(A + lu[:, None] + lv[None, :])
        residual = max(
            float(np.max(np.abs(plan.sum(axis=1) - a))),
            float(np.max(np.abs(plan.sum(axis=0) - b))),
        )
        if residual < tol:
            break
    plan = np.exp(A + lu[:, None] + lv[None, :])
    return Coupling(
        plan=plan,
        row_marginal=plan.sum(axis=1),
        col_marginal=plan.sum(axis=0),
        objective_trace=(entropic_objective(plan, C, lambda_),),
        iterations=iterations,
        converged=residual < tol,
        residual=residual,
    )


def partial_ot_source_weights(
    cost: CostMatrix, w_t: FloatArray, lambda1: float
) -> tuple[FloatArray, Coupling]:
    """Closed-form column-constrained entropic plan and the source masses.

    The optimal plan is the kernel ``exp(-C/lambda1 - 1)`` with each column
    rescaled to sum to its target mass; the source weights are its row sums.
    Columns are normalized in the log domain, which is exactly the same
    rescaling (each column is proportional to the kernel column), so the
    kernel may underflow without harming the result.  Single pass, no
    iteration.
    """
    C = cost.values
    k_s, k_t = C.shape
    b = _check_mass_vector(w_t, k_t, "w_t")
    if lambda1 <= 0:
        raise ValueError("lambda1 must be > 0")

    A = -C / lambda1
    col_norm = logsumexp(A, axis=0)
    with np.errstate(divide="ignore"):
        log_plan = A - col_norm[None, :] + np.log(b)[None, :]
    plan = np.exp(log_plan)
    if not np.all(np.isfinite(plan)):
        raise NumericalUnderflow("plan not representable even after log-domain rescale")
    w_s = plan.sum(axis=1)
    coupling = Coupling(
        plan=plan,
        row_marginal=w_s,
        col_marginal=plan.sum(axis=0),
        objective_trace=(entropic_objective(plan, C, lambda1),),
        iterations=0,
        converged=True,
        residual=float(np.max(np.abs(plan.sum(axis=0) - b))),
    )
    return w_s, coupling


def group_lasso_value(plan: FloatArray, class_of_row: IntArray) -> float:
    """Sum over target columns and classes of within-class column norms."""
    plan = np.asarray(plan, dtype=np.float64)
    class_of_row = np.asarray(class_of_row)
    if class_of_row.shape != (plan.shape[0],):
        raise DimensionMismatch("class_of_row must label every plan row")
    return float(_group_norms(plan, _class_indicator(class_of_row)).sum())


def _class_indicator(class_of_row: IntArray) -> FloatArray:
    classes = np.unique(class_of_row)
    indicator = np.zeros((classes.size, class_of_row.size))
    for i, c in enumerate(classes):
        indicator[i, class_of_row == c] = 1.0
    return indicator


def _group_norms(plan: FloatArray, indicator: FloatArray) -> FloatArray:
    """Euclidean norm of each (class, column) segment; shape (C, k_t)."""
    return np.sqrt(indicator @ (plan**2))


def _group_subgradient(plan: FloatArray, indicator: FloatArray) -> FloatArray:
    """plan / segment-norm per entry; 0 on zero-norm segments."""
    norms = _group_norms(plan, indicator)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(norms > 0, 1.0 / norms, 0.0)
    return plan * (indicator.T @ inv)


def _golden_section(f, lo: float = 0.0, hi: float = 1.0, iters: int = 50) -> float:
    """Minimizer of a 1-D convex function on [lo, hi] by golden section."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = f(x2)
    return (lo + hi) / 2.0


def gcg_solve(
    cost: CostMatrix,
    w_s: FloatArray,
    w_t: FloatArray,
    class_of_row: IntArray,
    params: OtParams,
) -> Coupling:
    """Entropic OT with a group-sparse penalty, by conditional gradient.

    Each outer iteration linearizes the penalty at the current plan
    (subgradient ``G = C + eta * dOmega``), solves the entropic subproblem
    on G, then takes the best point on the segment to the subproblem
    solution (golden-section line search; the restricted objective is
    convex).  The recorded objective trace is non-increasing; entry 0 is
    the independent coupling ``w_s w_t^T`` the iteration starts from.

    With ``eta == 0`` the penalty vanishes and the plain sinkhorn solution
    is returned directly.
    """
    C = cost.values
    k_s, k_t = C.shape
    a = _check_mass_vector(w_s, k_s, "w_s")
    b = _check_mass_vector(w_t, k_t, "w_t")
    class_of_row = np.asarray(class_of_row)
    if class_of_row.shape != (k_s,):
        raise DimensionMismatch("class_of_row must label every source row")

    if params.eta == 0.0:
        return sinkhorn(cost, a, b, params.lambda_, params.tol, params.max_sinkhorn)

    indicator = _class_indicator(class_of_row)

    def objective(plan: FloatArray) -> float:
        return entropic_objective(plan, C, params.lambda_) + params.eta * float(
            _group_norms(plan, indicator).sum()
        )

    plan = np.outer(a, b)
    trace = [objective(plan)]
    converged = False
    inner_converged = True
    for _ in range(params.max_outer):
        G = C + params.eta * _group_subgradient(plan, indicator)
        sub = sinkhorn(
            CostMatrix(values=G, kind=cost.kind),
            a,
            b,
            params.lambda_,
            params.tol,
            params.max_sinkhorn,
        )
        inner_converged = inner_converged and sub.converged
        direction = sub.plan - plan

        def on_segment(alpha: float) -> float:
            return objective(plan + alpha * direction)

        alpha = _golden_section(on_segment)
        candidates = [(on_segment(t), t) for t in (0.0, alpha, 1.0)]
        best_val, best_alpha = min(candidates, key=lambda p: p[0])
        if best_alpha > 0.0:
            plan = plan + best_alpha * direction
        trace.append(best_val)
        rel_drop = (trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
        if best_alpha == 0.0 or rel_drop < params.tol:
            converged = True
            break

    residual = max(
        float(np.max(np.abs(plan.sum(axis=1) - a))),
        float(np.max(np.abs(plan.sum(axis=0) - b))),
    )
    return Coupling(
        plan=plan,
        row_marginal=plan.sum(axis=1),
        col_marginal=plan.sum(axis=0),
        objective_trace=tuple(trace),
        iterations=len(trace) - 1,
        converged=converged and inner_converged,
        residual=residual,
    )


def barycentric_map(
    plan: FloatArray | Coupling,
    target_repr: FloatArray,
    cost: FloatArray | None = None,
) -> FloatArray:
    """Map each source row to the plan-weighted average of target rows.

    A row with zero mass has no barycenter; when ``cost`` is supplied such a
    row falls back to copying the cheapest target row, otherwise
    ZeroMassRow is raised.
    """
    if isinstance(plan, Coupling):
        plan = plan.plan
    plan = np.asarray(plan, dtype=np.float64)
    target_repr = np.asarray(target_repr, dtype=np.float64)
    if plan.shape[1] != target_repr.shape[0]:
        raise DimensionMismatch(
            f"plan has {plan.shape[1]} columns but target_repr {target_repr.shape[0]} rows"
        )
    row_mass = plan.sum(axis=1)
    zero_rows = np.flatnonzero(row_mass == 0)
    safe_mass = np.where(row_mass > 0, row_mass, 1.0)
    mapped = (plan / safe_mass[:, None]) @ target_repr
    for i in zero_rows:
        if cost is None:
            raise ZeroMassRow(int(i))
        mapped[i] = target_repr[int(np.argmin(cost[i]))]
    return mapped


def zero_mass_rows(plan: FloatArray | Coupling) -> tuple[int, ...]:
    """Indices of plan rows that carry no mass (barycentric fallback rows)."""
    if isinstance(plan, Coupling):
        plan = plan.plan
    return tuple(int(i) for i in np.flatnonzero(np.asarray(plan).sum(axis=1) == 0))
