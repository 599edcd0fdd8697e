"""Optimal-control problem model: dynamics, endpoint data, candidate processes.

A problem couples expression-based dynamics dx/dt = f(t, x, u) with endpoint
data (a cost F0, inequality constraints F_j <= 0, equality constraints
K_k = 0, all functions of the endpoints) and a finite list of control sample
vectors standing in for the control set U.  Controls are piecewise constant
and left-continuous: on (b_{j-1}, b_j] the control equals the segment value,
and the value at t0 is the first segment's.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .exprlang import Expr


class ProblemError(ValueError):
    """Ill-formed problem data (dimensions, variables, breakpoints)."""


def state_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def control_names(r: int) -> list[str]:
    return [f"u{j + 1}" for j in range(r)]


def endpoint_names(n: int, free_time: bool) -> list[str]:
    names = [f"x0_{i + 1}" for i in range(n)] + [f"x1_{i + 1}" for i in range(n)]
    if free_time:
        names += ["t0", "t1"]
    return names


@dataclass(frozen=True)
class FixedTime:
    """Problem posed on a fixed interval [t0, t1]."""
    t0: float
    t1: float


@dataclass(frozen=True)
class FreeTime:
    """Terminal (and/or initial) time free; pinned, if at all, through K."""


@dataclass(frozen=True)
class EndpointData:
    """Endpoint cost F0, inequality block F (componentwise <= 0) and equality
    block K (= 0), all expressions in x0_i, x1_i (and t0, t1 when the time
    interval is free)."""

    f0: Expr
    f_ineq: tuple[Expr, ...] = ()
    k_eq: tuple[Expr, ...] = ()

    def env(self, x0, x1, t0=None, t1=None) -> dict[str, float]:
        env = {}
        for i, v in enumerate(np.asarray(x0, dtype=float)):
            env[f"x0_{i + 1}"] = float(v)
        for i, v in enumerate(np.asarray(x1, dtype=float)):
            env[f"x1_{i + 1}"] = float(v)
        if t0 is not None:
            env["t0"] = float(t0)
        if t1 is not None:
            env["t1"] = float(t1)
        return env

    def f0_value(self, env) -> float:
        return exprlang.evaluate(self.f0, env)

    def f_values(self, env) -> np.ndarray:
        return np.array([exprlang.evaluate(e, env) for e in self.f_ineq], dtype=float)

    def k_values(self, env) -> np.ndarray:
        return np.array([exprlang.evaluate(e, env) for e in self.k_eq], dtype=float)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Dynamics + endpoint data + sampled control set.

    Parameters
    ----------
    n, r : int
        State and control dimensions.
    dynamics : tuple of Expr
        Right-hand sides f_i over variables t, x1..xn, u1..ur.
    control_samples : tuple of ndarray
        Finite stand-in for the control set U; each sample has length r.
    endpoint : EndpointData
    time_mode : FixedTime or FreeTime
    autonomous : bool, optional
        If given it must match a syntactic scan of the dynamics for 't'.
    """

    n: int
    r: int
    dynamics: tuple[Expr, ...]
    control_samples: tuple[np.ndarray, ...]
    endpoint: EndpointData
    time_mode: FixedTime | FreeTime
    autonomous: bool | None = None

    def __post_init__(self):
        if self.n < 1 or self.r < 1:
            raise ProblemError(f"need n >= 1 and r >= 1, got n={self.n}, r={self.r}")
        if len(self.dynamics) != self.n:
            raise ProblemError(
                f"{len(self.dynamics)} dynamics expressions for n={self.n} states")
        xnames = state_names(self.n)
        unames = control_names(self.r)
        allowed = set(xnames) | set(unames) | {"t"}
        for i, expr in enumerate(self.dynamics):
            extra = exprlang.variables(expr) - allowed
            if extra:
                raise ProblemError(
                    f"dynamics[{i}] uses unknown variable(s) {sorted(extra)}")
        samples = tuple(np.asarray(s, dtype=float).reshape(-1)
                        for s in self.control_samples)
        if not samples:
            raise ProblemError("control_samples must be nonempty")
        for s in samples:
            if s.shape != (self.r,):
                raise ProblemError(
                    f"control sample {s!r} does not have dimension r={self.r}")
        object.__setattr__(self, "control_samples", samples)

        free = isinstance(self.time_mode, FreeTime)
        if isinstance(self.time_mode, FixedTime):
            if not self.time_mode.t1 > self.time_mode.t0:
                raise ProblemError("fixed time interval must have t1 > t0")
        ep_allowed = set(endpoint_names(self.n, free))
        for label, exprs in (("F0", (self.endpoint.f0,)),
                             ("F", self.endpoint.f_ineq),
                             ("K", self.endpoint.k_eq)):
            for i, expr in enumerate(exprs):
                extra = exprlang.variables(expr) - ep_allowed
                if extra:
                    raise ProblemError(
                        f"endpoint {label}[{i}] uses unknown variable(s) {sorted(extra)}")

        scan = not any("t" in exprlang.variables(e) for e in self.dynamics)
        if self.autonomous is None:
            object.__setattr__(self, "autonomous", scan)
        elif self.autonomous != scan:
            raise ProblemError(
                f"autonomous={self.autonomous} contradicts the dynamics (scan says {scan})")

        object.__setattr__(self, "_xnames", xnames)
        object.__setattr__(self, "_unames", unames)

    @property
    def d_f(self) -> int:
        return len(self.endpoint.f_ineq)

    @property
    def d_k(self) -> int:
        return len(self.endpoint.k_eq)

    def dynamics_env(self, t, x, u) -> dict[str, float]:
        env = {"t": float(t)}
        for name, v in zip(self._xnames, x):
            env[name] = float(v)
        for name, v in zip(self._unames, u):
            env[name] = float(v)
        return env

    def f(self, t, x, u) -> np.ndarray:
        """Dynamics right-hand side at (t, x, u)."""
        env = self.dynamics_env(t, x, u)
        return np.array([exprlang.evaluate(e, env) for e in self.dynamics])

    def f_x(self, t, x, u) -> np.ndarray:
        """State Jacobian of the dynamics at (t, x, u)."""
        env = self.dynamics_env(t, x, u)
        return exprlang.jacobian(self.dynamics, self._xnames, env)

    def f_t(self, t, x, u) -> np.ndarray:
        """Partial of the dynamics in t at (t, x, u)."""
        env = self.dynamics_env(t, x, u)
        return np.array([exprlang.eval_dual(e, env, "t")[1] for e in self.dynamics])

    def delta_f(self, t, x, v, u_hat) -> np.ndarray:
        """Needle increment f(t, x, v) - f(t, x, u_hat)."""
        return self.f(t, x, v) - self.f(t, x, u_hat)


@dataclass(frozen=True, eq=False)
class PiecewiseControl:
    """Piecewise-constant, left-continuous control on [b_0, b_m]."""

    breakpoints: np.ndarray        # shape (m+1,), strictly increasing
    values: tuple[np.ndarray, ...]  # m segment values, each shape (r,)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        vals = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.values)
        if bp.size < 2:
            raise ProblemError("need at least two breakpoints")
        if not np.all(np.diff(bp) > 0):
            raise ProblemError("breakpoints must be strictly increasing")
        if len(vals) != bp.size - 1:
            raise ProblemError(
                f"{len(vals)} segment values for {bp.size - 1} segments")
        dims = {v.shape for v in vals}
        if len(dims) > 1:
            raise ProblemError("segment values have inconsistent dimensions")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def t0(self) -> float:
        return float(self.breakpoints[0])

    @property
    def t1(self) -> float:
        return float(self.breakpoints[-1])

    def segment_index(self, t: float) -> int:
        """Index of the segment whose half-open interval (b_{j-1}, b_j]
        contains t; t0 maps to the first segment."""
        bp = self.breakpoints
        if t < bp[0] or t > bp[-1]:
            raise ProblemError(f"time {t!r} outside control domain [{bp[0]}, {bp[-1]}]")
        idx = int(np.searchsorted(bp, t, side="left")) - 1
        return max(idx, 0)

    def value_at(self, t: float) -> np.ndarray:
        return self.values[self.segment_index(t)]


def evaluate_control(control: PiecewiseControl, t: float) -> np.ndarray:
    """Left-continuous evaluation of a piecewise-constant control."""
    return control.value_at(t)


@dataclass(frozen=True, eq=False)
class CandidateProcess:
    """A control together with its state trajectory sampled on a grid that
    contains every control breakpoint exactly."""

    control: PiecewiseControl
    grid: np.ndarray     # (N+1,)
    states: np.ndarray   # (N+1, n)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).reshape(-1)
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != grid.size:
            raise ProblemError("states must be (len(grid), n)")
        if not np.all(np.diff(grid) > 0):
            raise ProblemError("grid must be strictly increasing")
        for b in self.control.breakpoints:
            i = int(np.searchsorted(grid, b))
            if i >= grid.size or grid[i] != b:
                raise ProblemError(f"control breakpoint {b!r} is not a grid node")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", states)

    @property
    def t0(self) -> float:
        return float(self.grid[0])

    @property
    def t1(self) -> float:
        return float(self.grid[-1])

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    def node_index(self, t: float) -> int | None:
        """Index of the grid node equal to t (within 1e-12 of the span),
        or None."""
        grid = self.grid
        tol = 1e-12 * max(1.0, abs(grid[-1] - grid[0]))
        i = int(np.searchsorted(grid, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < grid.size and abs(grid[j] - t) <= tol:
                return j
        return None

    def endpoint_env(self) -> dict[str, float]:
        return {"t0": self.t0, "t1": self.t1,
                **{f"x0_{i + 1}": float(v) for i, v in enumerate(self.initial_state)},
                **{f"x1_{i + 1}": float(v) for i, v in enumerate(self.terminal_state)}}


@dataclass(frozen=True)
class AdmissibilityReport:
    dynamics_residual: float
    k_residual: float
    f_slack: float
    tol_feas: float
    k_values: tuple[float, ...] = field(default=())
    f_values: tuple[float, ...] = field(default=())

    @property
    def admissible(self) -> bool:
        return (self.dynamics_residual <= self.tol_feas
                and self.k_residual <= self.tol_feas
                and self.f_slack <= self.tol_feas)


def check_admissibility(prob: ControlProblem, cand: CandidateProcess,
                        tol_feas: float = 1e-6) -> AdmissibilityReport:
    """Re-integrate the candidate's control from its initial state on the
    candidate's own grid and compare; evaluate endpoint constraint residuals.

    dynamics_residual: max over grid nodes of |x_hat - reintegrated| (inf norm)
    k_residual:        max_k |K_k|
    f_slack:           max_j F_j (positive part is what matters)
    """
    from . import integrate  # deferred: integrate imports this module's types

    if isinstance(prob.time_mode, FixedTime):
        if abs(cand.t0 - prob.time_mode.t0) > 1e-12 or \
           abs(cand.t1 - prob.time_mode.t1) > 1e-12:
            raise ProblemError(
                f"candidate interval [{cand.t0}, {cand.t1}] does not match the "
                f"fixed interval [{prob.time_mode.t0}, {prob.time_mode.t1}]")

    traj = integrate.integrate_on_grid(prob, cand.control, cand.initial_state,
                                       cand.grid)
    dyn_res = float(np.max(np.abs(traj.samples - cand.states)))

    env = cand.endpoint_env()
    k_vals = prob.endpoint.k_values(env)
    f_vals = prob.endpoint.f_values(env)
    k_res = float(np.max(np.abs(k_vals))) if k_vals.size else 0.0
    f_slack = float(np.max(f_vals)) if f_vals.size else 0.0
    return AdmissibilityReport(dynamics_residual=dyn_res, k_residual=k_res,
                               f_slack=f_slack, tol_feas=tol_feas,
                               k_values=tuple(float(v) for v in k_vals),
                               f_values=tuple(float(v) for v in f_vals))
