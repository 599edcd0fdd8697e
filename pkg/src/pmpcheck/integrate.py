"""Fixed-step RK4 integration of the state, variational, and adjoint systems.

Grids are uniform at ``steps_per_unit`` steps per unit time with every control
breakpoint (and any caller-supplied time, e.g. a needle location) inserted as
an exact node, so the integrand is smooth inside each step.  Dense output is
the stored nodes; sub-node queries interpolate linearly with O(h^2) error,
but every consumer in this package queries at grid nodes by construction.

The variational and adjoint systems are linear along a base process; both are
integrated jointly with a re-integration of the base state so that Jacobians
are sampled at RK4 stage times with full fourth-order accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import CandidateProcess, ControlProblem, PiecewiseControl

DEFAULT_STEPS_PER_UNIT = 1000


class IntegrationError(RuntimeError):
    """State became non-finite during integration."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of a vector function of time on a strictly increasing grid."""

    grid: np.ndarray      # (N+1,)
    samples: np.ndarray   # (N+1, dim)

    def node_index(self, t: float) -> int:
        grid = self.grid
        tol = 1e-12 * max(1.0, abs(grid[-1] - grid[0]))
        i = int(np.searchsorted(grid, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < grid.size and abs(grid[j] - t) <= tol:
                return j
        raise KeyError(f"time {t!r} is not a grid node")

    def value_at(self, t: float) -> np.ndarray:
        """Exact at nodes; linear interpolation (O(h^2)) between them."""
        grid = self.grid
        if t < grid[0] or t > grid[-1]:
            raise KeyError(f"time {t!r} outside [{grid[0]}, {grid[-1]}]")
        try:
            return self.samples[self.node_index(t)]
        except KeyError:
            pass
        i = int(np.searchsorted(grid, t)) - 1
        w = (t - grid[i]) / (grid[i + 1] - grid[i])
        return (1.0 - w) * self.samples[i] + w * self.samples[i + 1]

    @property
    def terminal(self) -> np.ndarray:
        return self.samples[-1]


def build_grid(t0: float, t1: float, steps_per_unit: int,
               forced: tuple[float, ...] = ()) -> np.ndarray:
    """Uniform grid on [t0, t1] with the forced times inserted exactly.

    Base nodes closer than 1e-12 * span to a forced node are dropped in favor
    of the forced node, so breakpoints survive with their exact float value.
    """
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    span = t1 - t0
    for tf in forced:
        if tf < t0 - 1e-12 * span or tf > t1 + 1e-12 * span:
            raise ValueError(f"forced time {tf!r} outside [{t0}, {t1}]")
    n_steps = max(1, int(round(steps_per_unit * span)))
    base = np.linspace(t0, t1, n_steps + 1)
    critical = np.unique(np.concatenate([[t0, t1], np.asarray(forced, dtype=float)]))
    critical = critical[(critical >= t0) & (critical <= t1)]
    tol = 1e-12 * max(1.0, span)
    # keep base nodes that are not (nearly) duplicated by a critical node
    pos = np.searchsorted(critical, base)
    near = np.zeros(base.size, dtype=bool)
    for shift in (-1, 0):
        idx = np.clip(pos + shift, 0, critical.size - 1)
        near |= np.abs(critical[idx] - base) <= tol
    return np.sort(np.concatenate([critical, base[~near]]))


def _rk4_path(rhs, grid: np.ndarray, y0: np.ndarray, control_of_interval) -> np.ndarray:
    """March y' = rhs(t, y, u) across consecutive grid nodes (u frozen per
    interval); works marching backward too when grid is decreasing."""
    y = np.asarray(y0, dtype=float).copy()
    out = np.empty((grid.size, y.size))
    out[0] = y
    for k in range(grid.size - 1):
        ta, tb = grid[k], grid[k + 1]
        h = tb - ta
        u = control_of_interval(k)
        k1 = rhs(ta, y, u)
        k2 = rhs(ta + 0.5 * h, y + 0.5 * h * k1, u)
        k3 = rhs(ta + 0.5 * h, y + 0.5 * h * k2, u)
        k4 = rhs(tb, y + h * k3, u)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"state became non-finite near t={tb!r}", float(tb))
        out[k + 1] = y
    return out


def integrate_on_grid(prob: ControlProblem, control: PiecewiseControl,
                      a, grid: np.ndarray) -> Trajectory:
    """Integrate the state on an explicit grid that already contains every
    control breakpoint."""
    grid = np.asarray(grid, dtype=float)

    def rhs(t, x, u):
        return prob.f(t, x, u)

    def u_of(k):
        # constant on (grid[k], grid[k+1]]: left-continuous value at the right node
        return control.value_at(grid[k + 1])

    samples = _rk4_path(rhs, grid, np.asarray(a, dtype=float), u_of)
    return Trajectory(grid=grid, samples=samples)


def integrate_state(prob: ControlProblem, control: PiecewiseControl, a,
                    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
                    forced_times: tuple[float, ...] = ()) -> Trajectory:
    """Integrate dx/dt = f(t, x, u(t)) over the control's domain."""
    forced = tuple(control.breakpoints) + tuple(forced_times)
    grid = build_grid(control.t0, control.t1, steps_per_unit, forced)
    return integrate_on_grid(prob, control, a, grid)


def make_candidate(prob: ControlProblem, control: PiecewiseControl, a,
                   steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
                   forced_times: tuple[float, ...] = ()) -> CandidateProcess:
    """Build a CandidateProcess by integrating the control from state ``a``."""
    traj = integrate_state(prob, control, a, steps_per_unit, forced_times)
    return CandidateProcess(control=control, grid=traj.grid, states=traj.samples)


def infer_steps_per_unit(base: CandidateProcess) -> int:
    span = base.t1 - base.t0
    return max(1, int(round((base.grid.size - 1) / span)))


def state_at(prob: ControlProblem, base: CandidateProcess, t: float) -> np.ndarray:
    """Base state at time t: stored when t is a grid node, otherwise a local
    RK4 step from the last node before t (no breakpoint can sit inside)."""
    idx = base.node_index(t)
    if idx is not None:
        return base.states[idx]
    if t < base.t0 or t > base.t1:
        raise ValueError(f"time {t!r} outside [{base.t0}, {base.t1}]")
    k = int(np.searchsorted(base.grid, t)) - 1
    mini = np.array([base.grid[k], t])
    traj = integrate_on_grid(prob, base.control, base.states[k], mini)
    return traj.terminal


def integrate_variational(prob: ControlProblem, base: CandidateProcess,
                          start_time: float, xbar0,
                          steps_per_unit: int | None = None) -> Trajectory:
    """Integrate the variational equation d xbar/dt = f_x(t, x(t), u(t)) xbar
    from start_time to the end of the base interval, along the base process.

    The base state is carried jointly so f_x is sampled at RK4 stage times.
    start_time need not be a base grid node; the state there is recovered by a
    local integration first.
    """
    n = prob.n
    if steps_per_unit is None:
        steps_per_unit = infer_steps_per_unit(base)
    x_start = state_at(prob, base, start_time)
    if abs(start_time - base.t1) <= 1e-12 * max(1.0, base.t1 - base.t0):
        grid = np.array([base.t1])
        return Trajectory(grid=grid, samples=np.asarray(xbar0, dtype=float)[None, :])
    bps = tuple(b for b in base.control.breakpoints if start_time < b < base.t1)
    grid = build_grid(start_time, base.t1, steps_per_unit, bps)

    def rhs(t, y, u):
        x, xbar = y[:n], y[n:]
        fx = prob.f_x(t, x, u)
        return np.concatenate([prob.f(t, x, u), fx @ xbar])

    def u_of(k):
        return base.control.value_at(grid[k + 1])

    y0 = np.concatenate([x_start, np.asarray(xbar0, dtype=float)])
    path = _rk4_path(rhs, grid, y0, u_of)
    return Trajectory(grid=grid, samples=path[:, n:])


def integrate_adjoint_matrix(prob: ControlProblem, base: CandidateProcess,
                             terminal_rows: np.ndarray,
                             steps_per_unit: int | None = None,
                             forced_times: tuple[float, ...] = ()):
    """Integrate m adjoint rows psi' = -psi f_x backward from t1 jointly with
    the base state.  Returns (grid ascending, x at nodes, psi array (m, N+1, n)).
    """
    n = prob.n
    rows = np.atleast_2d(np.asarray(terminal_rows, dtype=float))
    m = rows.shape[0]
    if rows.shape[1] != n:
        raise ValueError(f"terminal rows have dimension {rows.shape[1]}, expected {n}")
    if steps_per_unit is None:
        steps_per_unit = infer_steps_per_unit(base)
    forced = tuple(base.control.breakpoints) + tuple(forced_times)
    grid = build_grid(base.t0, base.t1, steps_per_unit, forced)
    rev = grid[::-1]

    def rhs(t, y, u):
        x = y[:n]
        psi = y[n:].reshape(m, n)
        fx = prob.f_x(t, x, u)
        return np.concatenate([prob.f(t, x, u), (-(psi @ fx)).ravel()])

    def u_of(k):
        # backward interval (rev[k+1], rev[k]]: control value at its right end
        return base.control.value_at(rev[k])

    y0 = np.concatenate([base.terminal_state, rows.ravel()])
    path = _rk4_path(rhs, rev, y0, u_of)[::-1]
    x_nodes = path[:, :n]
    psi_nodes = path[:, n:].reshape(grid.size, m, n).transpose(1, 0, 2)
    return grid, x_nodes, psi_nodes


def integrate_adjoint(prob: ControlProblem, base: CandidateProcess,
                      psi_terminal, steps_per_unit: int | None = None,
                      forced_times: tuple[float, ...] = ()) -> Trajectory:
    """Single adjoint row psi' = -psi f_x with psi(t1) given; ascending grid."""
    grid, _, psi = integrate_adjoint_matrix(
        prob, base, np.asarray(psi_terminal, dtype=float)[None, :],
        steps_per_unit, forced_times)
    return Trajectory(grid=grid, samples=psi[0])
