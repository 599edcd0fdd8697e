"""Dense two-phase primal simplex over free variables with Bland's rule.

Solves    min c.x   subject to   A x <= b,   x in R^m free.

Internally x is split into nonnegative parts (x = p - q), every row gets a
slack, and rows with negative right-hand side get an artificial variable.
Phase 1 minimizes the artificial sum; its optimum measures the least total
constraint violation.  When that optimum is positive the reduced costs of the
slack columns form a Farkas certificate y >= 0 with y.A = 0 and
y.b = -(phase-1 optimum) < 0, read off the final tableau at no extra cost.

Bland's rule (lowest-index entering column; ratio ties broken by lowest basic
variable index) guarantees termination; a generous pivot budget guards the
implementation anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SimplexCycleError(RuntimeError):
    """Pivot budget exhausted; must not happen with Bland's rule."""


@dataclass
class LpResult:
    status: str                 # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None        # point reached (least-violation point when infeasible)
    objective: float | None     # phase-2 objective (None for feasibility-only calls)
    phase1_value: float         # total constraint violation at the phase-1 optimum
    farkas: np.ndarray | None   # per-row Farkas weights when infeasible
    pivots: int


def _pivot(T: np.ndarray, obj: np.ndarray, basis: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    T[row, col] = 1.0
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    obj_factor = obj[col]
    if obj_factor != 0.0:
        obj -= obj_factor * T[row]
        obj[col] = 0.0
    basis[row] = col


def _bland(T: np.ndarray, obj: np.ndarray, basis: np.ndarray,
           allowed: np.ndarray, pivot_tol: float, budget: list[int]) -> str:
    ncols = T.shape[1] - 1
    while True:
        enter = -1
        for j in range(ncols):
            if allowed[j] and obj[j] < -pivot_tol:
                enter = j
                break
        if enter < 0:
            return "optimal"
        col = T[:, enter]
        leave = -1
        best_ratio = np.inf
        for i in range(T.shape[0]):
            if col[i] > pivot_tol:
                ratio = T[i, -1] / col[i]
                tol = 1e-12 * (1.0 + abs(best_ratio)) if np.isfinite(best_ratio) else 0.0
                if ratio < best_ratio - tol:
                    best_ratio = ratio
                    leave = i
                elif leave >= 0 and ratio <= best_ratio + tol and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return "unbounded"
        _pivot(T, obj, basis, leave, enter)
        budget[0] -= 1
        if budget[0] <= 0:
            raise SimplexCycleError(
                f"pivot budget exhausted on a {T.shape[0]}x{ncols} tableau")


def solve_inequalities(A, b, objective=None, *, pivot_tol: float = 1e-11,
                       feas_tol: float = 1e-8,
                       max_pivots: int = 200_000) -> LpResult:
    """Minimize ``objective . x`` over {x : A x <= b} (x free).

    With ``objective=None`` only feasibility is decided (phase 1).  The
    returned ``x`` is always the point reached: a feasible point when
    ``phase1_value <= feas_tol``, otherwise the least-total-violation point,
    alongside the Farkas certificate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n_rows, m = A.shape
    if b.size != n_rows:
        raise ValueError(f"{n_rows} rows but {b.size} right-hand sides")

    flip = b < 0.0
    Aw = np.where(flip[:, None], -A, A)
    rhs = np.where(flip, -b, b)
    art_rows = np.nonzero(flip)[0]
    n_art = art_rows.size

    n_s = n_rows
    ncols = 2 * m + n_s + n_art
    T = np.zeros((n_rows, ncols + 1))
    T[:, :m] = Aw
    T[:, m:2 * m] = -Aw
    for i in range(n_rows):
        T[i, 2 * m + i] = -1.0 if flip[i] else 1.0
    for k, i in enumerate(art_rows):
        T[i, 2 * m + n_s + k] = 1.0
    T[:, -1] = rhs

    basis = np.empty(n_rows, dtype=int)
    for i in range(n_rows):
        basis[i] = 2 * m + i
    for k, i in enumerate(art_rows):
        basis[i] = 2 * m + n_s + k

    # phase 1: min sum of artificials, priced out against the initial basis
    obj1 = np.zeros(ncols + 1)
    obj1[2 * m + n_s:2 * m + n_s + n_art] = 1.0
    for i in art_rows:
        obj1 -= T[i]
    # each artificial column is basic in exactly its own row, so its reduced
    # cost is 1 - 1 = 0; pin the exact zero against roundoff
    obj1[2 * m + n_s:2 * m + n_s + n_art] = 0.0

    allowed = np.ones(ncols, dtype=bool)
    allowed[2 * m + n_s:] = False  # artificials never (re-)enter
    budget = [max_pivots]
    status1 = _bland(T, obj1, basis, allowed, pivot_tol, budget)
    if status1 == "unbounded":  # pragma: no cover - phase 1 is bounded below
        raise SimplexCycleError("phase 1 reported unbounded")
    delta = -obj1[-1]
    pivots = max_pivots - budget[0]

    def extract_x() -> np.ndarray:
        vals = np.zeros(ncols)
        for i in range(n_rows):
            vals[basis[i]] = T[i, -1]
        return vals[:m] - vals[m:2 * m]

    if delta > feas_tol:
        farkas = np.maximum(obj1[2 * m:2 * m + n_s].copy(), 0.0)
        return LpResult(status="infeasible", x=extract_x(), objective=None,
                        phase1_value=float(max(delta, 0.0)), farkas=farkas,
                        pivots=pivots)

    if objective is None:
        return LpResult(status="optimal", x=extract_x(), objective=None,
                        phase1_value=float(max(delta, 0.0)), farkas=None,
                        pivots=pivots)

    # phase 2: drive basic artificials out (rows left inert are 0 = 0)
    for i in range(n_rows):
        if basis[i] >= 2 * m + n_s:
            for j in range(2 * m + n_s):
                if abs(T[i, j]) > pivot_tol:
                    _pivot(T, obj1, basis, i, j)
                    break

    c = np.asarray(objective, dtype=float).reshape(-1)
    if c.size != m:
        raise ValueError(f"objective has dimension {c.size}, expected {m}")
    obj2 = np.zeros(ncols + 1)
    obj2[:m] = c
    obj2[m:2 * m] = -c
    for i in range(n_rows):
        cb = obj2[basis[i]]
        if cb != 0.0:
            obj2 -= cb * T[i]
            obj2[basis[i]] = 0.0

    status2 = _bland(T, obj2, basis, allowed, pivot_tol, budget)
    pivots = max_pivots - budget[0]
    if status2 == "unbounded":
        return LpResult(status="unbounded", x=None, objective=None,
                        phase1_value=float(max(delta, 0.0)), farkas=None,
                        pivots=pivots)
    x = extract_x()
    return LpResult(status="optimal", x=x, objective=float(c @ x),
                    phase1_value=float(max(delta, 0.0)), farkas=None,
                    pivots=pivots)
