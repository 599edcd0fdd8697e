"""Multiplier feasibility: adjoint basis, constraint assembly, LP decision.

For a fixed-time problem and an admissible candidate, a multiplier tuple
lambda = (alpha0, alpha, beta) pairs with the adjoint solution psi(t; lambda)
ending at -l_x1(lambda), where l = alpha0 F0 + alpha.F + beta.K.  Because the
adjoint equation is linear and its terminal value is linear in lambda,
psi(.; lambda) is a superposition of one backward solve per endpoint
function; those basis solutions are computed once per candidate.

The polytope tested for nonemptiness collects, per needle packet N:

  (a) transversality at t0:    psi(t0; lambda) = l_x0(lambda)
  (b) normalization:           alpha0 + sum(alpha) + sum(sigma_k beta_k) = 1
  (c) complementary slackness: alpha_j = 0 for strictly inactive F_j
  (d) signs:                   alpha0 >= 0, alpha >= 0, sigma_k beta_k >= 0
  (e) needle rows:             psi(theta_i; lambda) . delta f_i <= slack

with the absolute-value normalization realized exactly by enumerating the
sign pattern sigma over the beta block (no beta+/beta- split, which would
admit spurious nontrivial-looking solutions).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import simplex
from .exprlang import gradient
from .needle import NeedlePacket
from .problem import (CandidateProcess, ControlProblem, FreeTime, ProblemError)
from . import integrate


class SignPatternError(ValueError):
    """Sign-pattern enumeration over the beta block is capped at d(K) <= 12."""


@dataclass(frozen=True)
class Tolerances:
    """Numeric thresholds shared across the certification pipeline."""

    slack_tol: float = 1e-7      # needle-row slack, scaled by the row inf-norm
    tol_active: float = 1e-6     # |F_j| threshold for activity
    feasible_tol: float = 1e-8   # phase-1 optimum <= : feasible
    marginal_tol: float = 1e-5   # phase-1 optimum >  : infeasible (else marginal)
    tol_feas: float = 1e-6       # admissibility residual bound
    pivot_tol: float = 1e-11


@dataclass(frozen=True, eq=False)
class MultiplierTuple:
    """(alpha0, alpha, beta) normalized by alpha0 + sum alpha + sum |beta| = 1."""

    alpha0: float
    alpha: np.ndarray
    beta: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.alpha0], np.asarray(self.alpha, dtype=float),
                               np.asarray(self.beta, dtype=float)])

    @property
    def l1_norm(self) -> float:
        return float(self.alpha0 + np.sum(np.abs(self.alpha))
                     + np.sum(np.abs(self.beta)))


@dataclass(frozen=True, eq=False)
class AdjointBasis:
    """One backward adjoint solve per endpoint function, on a shared grid."""

    labels: tuple[str, ...]   # "F0", "F1", ..., "K1", ...
    grid: np.ndarray          # (N+1,)
    x_nodes: np.ndarray       # (N+1, n) base state along the grid
    psi: np.ndarray           # (n_funcs, N+1, n)
    x0_grads: np.ndarray      # (n_funcs, n) endpoint gradients in x0
    x1_grads: np.ndarray      # (n_funcs, n) endpoint gradients in x1
    d_f: int
    d_k: int

    @property
    def n_funcs(self) -> int:
        return len(self.labels)

    def node_index(self, t: float) -> int:
        grid = self.grid
        tol = 1e-12 * max(1.0, abs(grid[-1] - grid[0]))
        i = int(np.searchsorted(grid, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < grid.size and abs(grid[j] - t) <= tol:
                return j
        raise KeyError(f"time {t!r} is not a basis grid node")

    def psi_at(self, t: float) -> np.ndarray:
        """(n_funcs, n) slice of all basis adjoints at a grid node."""
        return self.psi[:, self.node_index(t), :]

    def psi_of(self, lam: MultiplierTuple | np.ndarray) -> np.ndarray:
        """psi(.; lambda) on the basis grid by superposition, shape (N+1, n)."""
        vec = lam.as_vector() if isinstance(lam, MultiplierTuple) else \
            np.asarray(lam, dtype=float)
        return np.tensordot(vec, self.psi, axes=(0, 0))


def endpoint_functions(prob: ControlProblem):
    labels = ["F0"] + [f"F{j + 1}" for j in range(prob.d_f)] \
        + [f"K{k + 1}" for k in range(prob.d_k)]
    exprs = (prob.endpoint.f0,) + prob.endpoint.f_ineq + prob.endpoint.k_eq
    return labels, exprs


def compute_adjoint_basis(prob: ControlProblem, cand: CandidateProcess,
                          forced_times: tuple[float, ...] = (),
                          steps_per_unit: int | None = None) -> AdjointBasis:
    """Backward-integrate one adjoint per endpoint function along the candidate.

    ``forced_times`` (typically the needle locations of every packet that will
    be assembled against this basis) are inserted as grid nodes.
    """
    if isinstance(prob.time_mode, FreeTime):
        raise ProblemError(
            "adjoint basis needs a fixed time interval; apply the time "
            "rescaling transform first")
    labels, exprs = endpoint_functions(prob)
    env = cand.endpoint_env()
    n = prob.n
    x0_names = [f"x0_{i + 1}" for i in range(n)]
    x1_names = [f"x1_{i + 1}" for i in range(n)]
    x0_grads = np.array([gradient(e, x0_names, env) for e in exprs])
    x1_grads = np.array([gradient(e, x1_names, env) for e in exprs])

    grid, x_nodes, psi = integrate.integrate_adjoint_matrix(
        prob, cand, -x1_grads, steps_per_unit, forced_times)
    return AdjointBasis(labels=tuple(labels), grid=grid, x_nodes=x_nodes,
                        psi=psi, x0_grads=x0_grads, x1_grads=x1_grads,
                        d_f=prob.d_f, d_k=prob.d_k)


@dataclass(frozen=True, eq=False)
class FeasibilityProblem:
    """Linear rows over lambda = (alpha0, alpha, beta) for one sign pattern."""

    var_names: tuple[str, ...]
    a_eq: np.ndarray
    b_eq: np.ndarray
    eq_labels: tuple[str, ...]
    a_ineq: np.ndarray
    b_ineq: np.ndarray
    ineq_labels: tuple[str, ...]
    needle_rows: tuple[int, ...]          # indices into the inequality block
    needle_meta: tuple[tuple[float, tuple[float, ...]], ...]  # (theta, v)
    sign_pattern: tuple[float, ...]
    d_f: int
    d_k: int

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def canonical(self):
        """All rows as A x <= b (equalities become opposing pairs)."""
        blocks_a = [self.a_ineq, self.a_eq, -self.a_eq]
        blocks_b = [self.b_ineq, self.b_eq, -self.b_eq]
        labels = list(self.ineq_labels) \
            + [f"{l} (<=)" for l in self.eq_labels] \
            + [f"{l} (>=)" for l in self.eq_labels]
        return np.vstack(blocks_a), np.concatenate(blocks_b), tuple(labels)

    def split(self, x: np.ndarray) -> MultiplierTuple:
        return MultiplierTuple(alpha0=float(x[0]),
                               alpha=np.asarray(x[1:1 + self.d_f]),
                               beta=np.asarray(x[1 + self.d_f:]))


@dataclass(frozen=True, eq=False)
class FarkasCertificate:
    """Nonnegative row weights proving A x <= b has no solution."""

    labels: tuple[str, ...]
    weights: np.ndarray          # aligned with labels (canonical rows)
    b_dot: float                 # y . b  (must be < 0)
    a_residual: float            # max |y . A|  (must be ~ 0)

    def verified(self, tol: float = 1e-8) -> bool:
        return (self.b_dot < -tol and self.a_residual <= tol
                and float(np.min(self.weights)) >= -tol)


@dataclass(eq=False)
class FeasibilityResult:
    status: str                          # "feasible" | "marginal" | "infeasible"
    problem: FeasibilityProblem
    phase1_value: float
    multiplier: MultiplierTuple | None
    residual_eq: np.ndarray | None
    residual_ineq: np.ndarray | None
    farkas: FarkasCertificate | None
    pattern_values: tuple = field(default=())   # ((sigma, phase1), ...) when searched

    @property
    def sign_pattern(self) -> tuple[float, ...]:
        return self.problem.sign_pattern

    def needle_slacks(self) -> np.ndarray:
        """Values of the needle rows at the returned multiplier."""
        if self.multiplier is None:
            raise ValueError("no multiplier on an infeasible result")
        vec = self.multiplier.as_vector()
        rows = np.asarray(self.problem.needle_rows, dtype=int)
        return self.problem.a_ineq[rows] @ vec


def assemble_constraints(prob: ControlProblem, cand: CandidateProcess,
                         basis: AdjointBasis, packet: NeedlePacket,
                         tol: Tolerances, sign_pattern) -> FeasibilityProblem:
    """Build the multiplier polytope rows for one beta sign pattern."""
    d_f, d_k = basis.d_f, basis.d_k
    sign_pattern = tuple(float(s) for s in sign_pattern)
    if len(sign_pattern) != d_k:
        raise ValueError(f"sign pattern has {len(sign_pattern)} entries, d(K)={d_k}")
    if any(s not in (-1.0, 1.0) for s in sign_pattern):
        raise ValueError(f"sign pattern entries must be +-1, got {sign_pattern}")
    m = basis.n_funcs
    n = prob.n
    var_names = tuple(["alpha0"] + [f"alpha{j + 1}" for j in range(d_f)]
                      + [f"beta{k + 1}" for k in range(d_k)])

    eq_rows, eq_rhs, eq_labels = [], [], []
    # (a) transversality at t0: psi(t0; lambda) - l_x0(lambda) = 0, per component
    psi_t0 = basis.psi[:, 0, :]        # (m, n)
    for i in range(n):
        eq_rows.append(psi_t0[:, i] - basis.x0_grads[:, i])
        eq_rhs.append(0.0)
        eq_labels.append(f"transversality[{i}]")
    # (c) complementary slackness for strictly inactive F_j
    env = cand.endpoint_env()
    f_vals = prob.endpoint.f_values(env)
    for j in range(d_f):
        if f_vals[j] < -tol.tol_active:
            row = np.zeros(m)
            row[1 + j] = 1.0
            eq_rows.append(row)
            eq_rhs.append(0.0)
            eq_labels.append(f"slackness[F{j + 1}]")
    # (b) normalization with the pattern's signs on beta
    norm_row = np.ones(m)
    for k in range(d_k):
        norm_row[1 + d_f + k] = sign_pattern[k]
    eq_rows.append(norm_row)
    eq_rhs.append(1.0)
    eq_labels.append("normalization")

    ineq_rows, ineq_rhs, ineq_labels = [], [], []
    # (d) sign rows
    for idx, name in enumerate(var_names):
        if idx <= d_f:
            row = np.zeros(m)
            row[idx] = -1.0
            ineq_rows.append(row)
            ineq_rhs.append(0.0)
            ineq_labels.append(f"sign[{name}]")
        else:
            row = np.zeros(m)
            row[idx] = -sign_pattern[idx - 1 - d_f]
            ineq_rows.append(row)
            ineq_rhs.append(0.0)
            ineq_labels.append(f"sign[{name}]")
    # (e) needle rows
    needle_rows, needle_meta = [], []
    for i, nd in enumerate(packet.needles):
        k = basis.node_index(nd.theta)
        x_theta = basis.x_nodes[k]
        u_hat = cand.control.value_at(nd.theta)
        delta = prob.delta_f(nd.theta, x_theta, nd.v_array, u_hat)
        coeffs = basis.psi[:, k, :] @ delta
        scale = max(1.0, float(np.max(np.abs(coeffs))) if coeffs.size else 0.0)
        needle_rows.append(len(ineq_rows))
        needle_meta.append((nd.theta, nd.v))
        ineq_rows.append(coeffs)
        ineq_rhs.append(tol.slack_tol * scale)
        ineq_labels.append(f"needle[{i}]")

    return FeasibilityProblem(
        var_names=var_names,
        a_eq=np.array(eq_rows), b_eq=np.array(eq_rhs), eq_labels=tuple(eq_labels),
        a_ineq=np.array(ineq_rows), b_ineq=np.array(ineq_rhs),
        ineq_labels=tuple(ineq_labels),
        needle_rows=tuple(needle_rows), needle_meta=tuple(needle_meta),
        sign_pattern=sign_pattern, d_f=d_f, d_k=d_k)


def solve_feasibility(fp: FeasibilityProblem,
                      tol: Tolerances = Tolerances()) -> FeasibilityResult:
    """Decide nonemptiness of the assembled polytope by phase-1 simplex."""
    C, d, labels = fp.canonical()
    res = simplex.solve_inequalities(C, d, pivot_tol=tol.pivot_tol,
                                     feas_tol=tol.feasible_tol)
    delta = res.phase1_value
    if delta <= tol.feasible_tol:
        status = "feasible"
    elif delta <= tol.marginal_tol:
        status = "marginal"
    else:
        status = "infeasible"

    multiplier = fp.split(res.x) if res.x is not None else None
    residual_eq = fp.a_eq @ res.x - fp.b_eq if res.x is not None else None
    residual_ineq = fp.a_ineq @ res.x - fp.b_ineq if res.x is not None else None

    farkas = None
    if res.farkas is not None:
        y = res.farkas
        farkas = FarkasCertificate(labels=labels, weights=y,
                                   b_dot=float(y @ d),
                                   a_residual=float(np.max(np.abs(y @ C))))
    if status == "feasible":
        return FeasibilityResult(status=status, problem=fp, phase1_value=delta,
                                 multiplier=multiplier, residual_eq=residual_eq,
                                 residual_ineq=residual_ineq, farkas=None)
    return FeasibilityResult(status=status, problem=fp, phase1_value=delta,
                             multiplier=None, residual_eq=residual_eq,
                             residual_ineq=residual_ineq, farkas=farkas)


def sign_pattern_search(prob: ControlProblem, cand: CandidateProcess,
                        basis: AdjointBasis, packet: NeedlePacket,
                        tol: Tolerances = Tolerances()) -> FeasibilityResult:
    """Try every beta sign pattern (lexicographic, +1 first); first feasible
    pattern wins.  Infeasibility requires every pattern's phase-1 optimum to
    exceed marginal_tol; anything between feasible_tol and marginal_tol is
    reported as marginal."""
    d_k = basis.d_k
    if d_k > 12:
        raise SignPatternError(
            f"d(K) = {d_k} equality constraints need {2 ** d_k} sign patterns; "
            "the enumeration is capped at d(K) <= 12")
    values = []
    best: FeasibilityResult | None = None
    for sigma in itertools.product((1.0, -1.0), repeat=d_k):
        fp = assemble_constraints(prob, cand, basis, packet, tol, sigma)
        res = solve_feasibility(fp, tol)
        values.append((sigma, res.phase1_value))
        if res.status == "feasible":
            res.pattern_values = tuple(values)
            return res
        if best is None or res.phase1_value < best.phase1_value:
            best = res
    assert best is not None
    best.pattern_values = tuple(values)
    return best
