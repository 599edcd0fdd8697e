"""Needle variations: interval layout, control perturbation, endpoint map,
and its one-sided derivatives.

A needle (theta, v) replaces the base control by the constant vector v on the
half-open interval (theta - eps, theta].  A packet stacks several needles;
needles sharing the same theta stack leftward in packet order:

    (theta - e1, theta], (theta - e1 - e2, theta - e1], ...

The endpoint map P(a, eps) is the terminal state of the perturbed control
integrated from initial state a.  Its one-sided derivative in eps_i at 0 is
the terminal value of the variational equation started at theta_i with
initial value f(x(theta_i), v_i) - f(x(theta_i), u_hat(theta_i)); the
derivative in a is the variational flow applied to the initial offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import integrate
from .exprlang import Expr, gradient
from .problem import CandidateProcess, ControlProblem, PiecewiseControl


class LayoutError(ValueError):
    """Needle widths that do not fit: overlap or underflow past t0."""


@dataclass(frozen=True)
class NeedleSpec:
    """A needle location theta and replacement control vector v (expected to
    be drawn from the problem's control samples)."""

    theta: float
    v: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        v = self.v
        if np.ndim(v) == 0:
            v = (float(v),)
        object.__setattr__(self, "v", tuple(float(c) for c in np.asarray(v).reshape(-1)))

    @property
    def v_array(self) -> np.ndarray:
        return np.asarray(self.v, dtype=float)


@dataclass(frozen=True)
class NeedlePacket:
    """Finite list of needles, sorted by theta; ties allowed, order preserved."""

    needles: tuple[NeedleSpec, ...]

    def __post_init__(self):
        needles = tuple(self.needles)
        thetas = [nd.theta for nd in needles]
        if any(b < a for a, b in zip(thetas, thetas[1:])):
            raise LayoutError("packet needles must be sorted by theta")
        object.__setattr__(self, "needles", needles)

    @property
    def size(self) -> int:
        return len(self.needles)

    def thetas(self) -> np.ndarray:
        return np.array([nd.theta for nd in self.needles], dtype=float)

    def contains(self, other: "NeedlePacket") -> bool:
        """Multiset inclusion of (theta, v) pairs."""
        from collections import Counter
        mine = Counter((nd.theta, nd.v) for nd in self.needles)
        theirs = Counter((nd.theta, nd.v) for nd in other.needles)
        return all(mine[key] >= cnt for key, cnt in theirs.items())


@dataclass(frozen=True)
class IntervalLayout:
    """Disjoint half-open intervals (l_i, r_i], one per needle, in packet
    order; zero-width entries (eps_i = 0) are kept but empty."""

    intervals: tuple[tuple[float, float], ...]

    def nonempty(self):
        return [(i, lr) for i, lr in enumerate(self.intervals) if lr[0] < lr[1]]


def layout_intervals(packet: NeedlePacket, eps, t0: float, t1: float) -> IntervalLayout:
    """Assign (theta_i - stacked widths, ...] intervals to the packet.

    Raises LayoutError when widths are negative, run past t0, or make two
    intervals overlap (the spent widths of equal-theta needles stack leftward,
    so distinct thetas can still collide when widths are large).
    """
    eps = np.asarray(eps, dtype=float).reshape(-1)
    if eps.size != packet.size:
        raise LayoutError(f"{eps.size} widths for {packet.size} needles")
    if np.any(eps < 0):
        bad = int(np.argmin(eps))
        raise LayoutError(f"needle {bad}: negative width {eps[bad]!r}")

    intervals: list[tuple[float, float]] = []
    i = 0
    while i < packet.size:
        theta = packet.needles[i].theta
        if not (t0 < theta < t1):
            raise LayoutError(f"needle {i}: theta {theta!r} not inside ({t0}, {t1})")
        right = theta
        j = i
        while j < packet.size and packet.needles[j].theta == theta:
            left = right - eps[j]
            intervals.append((left, right))
            right = left
            j += 1
        i = j

    for idx, (left, right) in enumerate(intervals):
        if left < t0:
            raise LayoutError(
                f"needle {idx}: interval ({left!r}, {right!r}] runs past t0={t0}")

    occupied = sorted((lr, idx) for idx, lr in enumerate(intervals) if lr[0] < lr[1])
    for ((l_a, r_a), ia), ((l_b, r_b), ib) in zip(occupied, occupied[1:]):
        if l_b < r_a:
            raise LayoutError(
                f"needles {ia} and {ib} overlap: ({l_a!r}, {r_a!r}] and ({l_b!r}, {r_b!r}]")
    return IntervalLayout(intervals=tuple(intervals))


def perturb_control(base: PiecewiseControl, layout: IntervalLayout,
                    packet: NeedlePacket) -> PiecewiseControl:
    """Overwrite the base control with needle values on the layout intervals.

    Zero-width intervals change nothing; adjacent segments with equal values
    are merged, so an all-zero eps returns a control identical to the base.
    """
    events = set(float(b) for b in base.breakpoints)
    for idx, (l, r) in layout.nonempty():
        events.add(l)
        events.add(r)
    nodes = np.array(sorted(events))
    nodes = nodes[(nodes >= base.t0) & (nodes <= base.t1)]

    occupied = layout.nonempty()
    segments: list[np.ndarray] = []
    for a, b in zip(nodes, nodes[1:]):
        # the segment (a, b]: needle value if covered, else the base's
        value = None
        for idx, (l, r) in occupied:
            if l < b <= r:
                value = packet.needles[idx].v_array
                break
        if value is None:
            value = base.value_at(b)
        segments.append(value)

    merged_bp = [nodes[0]]
    merged_vals: list[np.ndarray] = []
    for k, val in enumerate(segments):
        if merged_vals and np.array_equal(merged_vals[-1], val):
            merged_bp[-1] = nodes[k + 1]
        else:
            merged_vals.append(val)
            merged_bp.append(nodes[k + 1])
    return PiecewiseControl(breakpoints=np.array(merged_bp), values=tuple(merged_vals))


def endpoint_map(prob: ControlProblem, base_control: PiecewiseControl,
                 packet: NeedlePacket, a, eps,
                 steps_per_unit: int = integrate.DEFAULT_STEPS_PER_UNIT) -> np.ndarray:
    """P(a, eps): terminal state of the packet-perturbed control from a."""
    layout = layout_intervals(packet, eps, base_control.t0, base_control.t1)
    perturbed = perturb_control(base_control, layout, packet)
    traj = integrate.integrate_state(prob, perturbed, a, steps_per_unit)
    return traj.terminal


def needle_right_derivative(prob: ControlProblem, base: CandidateProcess,
                            needle: NeedleSpec, start_time: float | None = None,
                            steps_per_unit: int | None = None) -> np.ndarray:
    """One-sided derivative of the endpoint map in the needle's width at 0:
    the variational solution from theta with initial value
    f(x(theta), v) - f(x(theta), u_hat(theta)).

    ``start_time`` supports needles buried inside a stack of equal-theta
    needles, whose intervals begin strictly left of theta.
    """
    s = needle.theta if start_time is None else float(start_time)
    if start_time is not None and s > needle.theta:
        raise LayoutError(f"start time {s!r} must not exceed theta {needle.theta!r}")
    if not (base.t0 < needle.theta < base.t1):
        raise LayoutError(f"theta {needle.theta!r} not inside ({base.t0}, {base.t1})")
    x_s = integrate.state_at(prob, base, s)
    u_s = base.control.value_at(s)
    delta = prob.delta_f(s, x_s, needle.v_array, u_s)
    traj = integrate.integrate_variational(prob, base, s, delta, steps_per_unit)
    return traj.terminal


def initial_state_derivative(prob: ControlProblem, base: CandidateProcess, abar,
                             steps_per_unit: int | None = None) -> np.ndarray:
    """Derivative of the endpoint map in the initial state, applied to abar."""
    traj = integrate.integrate_variational(prob, base, base.t0,
                                           np.asarray(abar, dtype=float),
                                           steps_per_unit)
    return traj.terminal


def composite_derivatives(prob: ControlProblem, base: CandidateProcess,
                          g: Expr, needle: NeedleSpec,
                          steps_per_unit: int | None = None):
    """Derivatives of G(a, eps) = g(a, P(a, eps)) via one backward adjoint run.

    Returns (row over the initial state, right derivative in the needle width):

        G_a      = g_x0 - psi(t0)
        G_eps+   = -psi(theta) . (f(x(theta), v) - f(x(theta), u_hat(theta)))

    with psi' = -psi f_x and psi(t1) = -g_x1.
    """
    env = base.endpoint_env()
    n = prob.n
    x0_names = [f"x0_{i + 1}" for i in range(n)]
    x1_names = [f"x1_{i + 1}" for i in range(n)]
    g_x0 = gradient(g, x0_names, env)
    g_x1 = gradient(g, x1_names, env)

    psi = integrate.integrate_adjoint(prob, base, -g_x1, steps_per_unit,
                                      forced_times=(needle.theta,))
    psi_t0 = psi.samples[0]
    psi_theta = psi.samples[psi.node_index(needle.theta)]

    x_theta = integrate.state_at(prob, base, needle.theta)
    u_theta = base.control.value_at(needle.theta)
    delta = prob.delta_f(needle.theta, x_theta, needle.v_array, u_theta)

    g_a = g_x0 - psi_t0
    g_eps = float(-(psi_theta @ delta))
    return g_a, g_eps
