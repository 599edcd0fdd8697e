"""Certification loop: refine needle packets until a verdict stabilizes.

A refinement schedule runs nested stages.  Stage c places needles on the
uniform interior nodes t0 + k (t1 - t0)/c (k = 1..c-1) -- consecutive theta
counts double, so each stage's grid contains the previous one -- plus one
needle at every interior control breakpoint (switch points are where
violations of bang-bang candidates concentrate).  Every needle location is
paired with the selected control samples.

Per stage the multiplier polytope is assembled and decided per sign pattern.
Because packets nest, the polytopes shrink as stages advance; a certificate
from the final stage satisfies every earlier stage's rows by construction
(this is checked and reported).  The first infeasible stage stops the loop
with a violation verdict carrying a Farkas certificate and witness needles;
phase-1 optima inside the marginal band stop it with a marginal verdict.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .multipliers import (AdjointBasis, FeasibilityResult, MultiplierTuple,
                          Tolerances, assemble_constraints,
                          compute_adjoint_basis, sign_pattern_search)
from .needle import NeedlePacket, NeedleSpec
from .problem import (CandidateProcess, ControlProblem,
                      check_admissibility)
from . import simplex


class AdmissibilityError(RuntimeError):
    """Candidate rejected before certification; carries the report."""

    def __init__(self, report):
        super().__init__(
            f"candidate is not admissible: dynamics residual "
            f"{report.dynamics_residual:.3g}, K residual {report.k_residual:.3g}, "
            f"F slack {report.f_slack:.3g} (tolerance {report.tol_feas:.3g})")
        self.report = report


@dataclass(frozen=True)
class RefinementSchedule:
    """Stage list of (theta_count, u_sample_count).

    theta counts must strictly increase and each divide the next, so the
    uniform grids nest; u counts must not decrease.
    """

    stages: tuple[tuple[int, int], ...]

    def __post_init__(self):
        stages = tuple((int(c), int(u)) for c, u in self.stages)
        if not stages:
            raise ValueError("schedule needs at least one stage")
        for (c1, u1), (c2, u2) in zip(stages, stages[1:]):
            if not (c2 > c1 and c2 % c1 == 0):
                raise ValueError(
                    f"theta counts must strictly increase and nest: {c1} -> {c2}")
            if u2 < u1:
                raise ValueError(f"u sample counts must not decrease: {u1} -> {u2}")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def default(cls, n_samples: int, u_cap: int = 64) -> "RefinementSchedule":
        u = min(n_samples, u_cap)
        return cls(stages=((8, u), (16, u), (32, u)))

    @classmethod
    def from_theta_counts(cls, counts, n_samples: int,
                          u_cap: int = 64) -> "RefinementSchedule":
        u = min(n_samples, u_cap)
        return cls(stages=tuple((int(c), u) for c in counts))


def select_samples(samples, count: int, seed: int = 0):
    """Deterministic round-robin subsample of the control list."""
    n = len(samples)
    count = min(count, n)
    if count == n:
        return list(samples)
    offset = seed % n
    idx = sorted((offset + (i * n) // count) % n for i in range(count))
    return [samples[i] for i in idx]


def stage_thetas(cand: CandidateProcess, theta_count: int) -> np.ndarray:
    """Uniform interior nodes of theta_count subdivisions, plus every interior
    control breakpoint (left-continuity makes a needle at the breakpoint read
    the incoming control value)."""
    t0, t1 = cand.t0, cand.t1
    span = t1 - t0
    thetas = {t0 + k * span / theta_count for k in range(1, theta_count)}
    thetas.update(float(b) for b in cand.control.breakpoints if t0 < b < t1)
    return np.array(sorted(thetas))


def stage_packet(prob: ControlProblem, cand: CandidateProcess, theta_count: int,
                 u_count: int, seed: int = 0, u_cap: int = 64) -> NeedlePacket:
    chosen = select_samples(prob.control_samples, min(u_count, u_cap), seed)
    needles = [NeedleSpec(theta=th, v=tuple(v))
               for th in stage_thetas(cand, theta_count)
               for v in chosen]
    return NeedlePacket(needles=tuple(needles))


@dataclass(frozen=True, eq=False)
class HamiltonianProfile:
    """H(t) = psi(t; lambda) . f(t, x(t), u(t)) sampled at grid nodes."""

    grid: np.ndarray
    values: np.ndarray
    constant: float               # midrange of the samples
    constancy_residual: float     # max - min over nodes (left limits at switches)
    jump_residuals: tuple[tuple[float, float], ...]  # (breakpoint, |H- - H+|)
    autonomous: bool


@dataclass(frozen=True)
class ScanResult:
    """Best improvement of H over the sampled controls along the trajectory."""

    margin: float                 # max_t max_v H(t, v) - H(t, u_hat(t))
    at_time: float
    at_control: tuple[float, ...]
    n_times: int
    n_controls: int


@dataclass(frozen=True)
class Witness:
    """A needle row that stays violated at the least-violating multiplier."""

    theta: float
    v: tuple[float, ...]
    margin: float                 # best achievable slack across sign patterns
    certified: bool               # margin > marginal_tol for every pattern


@dataclass(frozen=True)
class StageRecord:
    theta_count: int
    u_count: int
    packet_size: int
    status: str
    phase1_value: float
    sign_pattern: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Certificate:
    multiplier: MultiplierTuple
    feasibility: FeasibilityResult
    hamiltonian: HamiltonianProfile
    scan: ScanResult
    worst_needle_slack: float
    nesting_max_slack: float
    stage_records: tuple[StageRecord, ...]
    basis: AdjointBasis

    kind = "certificate"


@dataclass(frozen=True, eq=False)
class Violation:
    stage_index: int              # 1-based stage that failed
    feasibility: FeasibilityResult
    witnesses: tuple[Witness, ...]
    stage_records: tuple[StageRecord, ...]
    basis: AdjointBasis

    kind = "violation"


@dataclass(frozen=True, eq=False)
class Marginal:
    stage_index: int
    feasibility: FeasibilityResult
    stage_records: tuple[StageRecord, ...]
    basis: AdjointBasis

    kind = "marginal"


Verdict = Certificate | Violation | Marginal


def check_packet(prob: ControlProblem, cand: CandidateProcess,
                 packet: NeedlePacket, basis: AdjointBasis | None = None,
                 tolerances: Tolerances = Tolerances(),
                 steps_per_unit: int | None = None) -> FeasibilityResult:
    """Decide the multiplier polytope for one packet (admissibility assumed)."""
    if basis is None:
        basis = compute_adjoint_basis(prob, cand,
                                      forced_times=tuple(packet.thetas()),
                                      steps_per_unit=steps_per_unit)
    return sign_pattern_search(prob, cand, basis, packet, tolerances)


def hamiltonian_profile(prob: ControlProblem, cand: CandidateProcess,
                        lam: MultiplierTuple,
                        basis: AdjointBasis) -> HamiltonianProfile:
    psi = basis.psi_of(lam)
    grid = basis.grid
    values = np.empty(grid.size)
    for k, t in enumerate(grid):
        u = cand.control.value_at(t)
        values[k] = psi[k] @ prob.f(t, basis.x_nodes[k], u)
    jumps = []
    bp = cand.control.breakpoints
    for j, b in enumerate(bp[1:-1], start=1):
        k = basis.node_index(float(b))
        u_in = cand.control.values[j - 1]
        u_out = cand.control.values[j]
        h_in = psi[k] @ prob.f(b, basis.x_nodes[k], u_in)
        h_out = psi[k] @ prob.f(b, basis.x_nodes[k], u_out)
        jumps.append((float(b), float(abs(h_in - h_out))))
    return HamiltonianProfile(
        grid=grid, values=values,
        constant=float(0.5 * (values.max() + values.min())),
        constancy_residual=float(values.max() - values.min()),
        jump_residuals=tuple(jumps),
        autonomous=prob.autonomous)


def universal_max_scan(prob: ControlProblem, cand: CandidateProcess,
                       lam: MultiplierTuple, basis: AdjointBasis,
                       t_grid_count: int = 200,
                       samples=None) -> ScanResult:
    """Scan H(psi(t), x(t), v) - H(psi(t), x(t), u_hat(t)) over sampled times
    and all control samples; a certificate should keep the margin at zero."""
    if samples is None:
        samples = prob.control_samples
    psi = basis.psi_of(lam)
    grid = basis.grid
    idx = set(np.unique(np.round(np.linspace(0, grid.size - 1,
                                             min(t_grid_count, grid.size)))
                        .astype(int)))
    for b in cand.control.breakpoints[1:-1]:
        idx.add(basis.node_index(float(b)))
    idx = sorted(idx)

    margin = -np.inf
    at_time, at_control = float(grid[0]), tuple(np.asarray(samples[0]).tolist())
    for k in idx:
        t = float(grid[k])
        x = basis.x_nodes[k]
        h_base = psi[k] @ prob.f(t, x, cand.control.value_at(t))
        for v in samples:
            gain = float(psi[k] @ prob.f(t, x, v) - h_base)
            if gain > margin:
                margin = gain
                at_time = t
                at_control = tuple(float(c) for c in np.asarray(v).reshape(-1))
    return ScanResult(margin=float(margin), at_time=at_time,
                      at_control=at_control, n_times=len(idx),
                      n_controls=len(samples))


def _witnesses(prob: ControlProblem, cand: CandidateProcess,
               basis: AdjointBasis, packet: NeedlePacket,
               tol: Tolerances) -> tuple[Witness, ...]:
    """Best-achievable needle slacks: per sign pattern, minimize the total
    needle violation subject to the always-satisfiable rows (a)-(d); a needle
    row whose residual stays above marginal_tol for every pattern that admits
    (a)-(d) at all is a certified witness."""
    n_needles = packet.size
    best = np.full(n_needles, np.inf)
    any_pattern = False
    for sigma in itertools.product((1.0, -1.0), repeat=basis.d_k):
        fp = assemble_constraints(prob, cand, basis, packet, tol, sigma)
        m = fp.n_vars
        rows_a = []
        rows_b = []
        # hard rows: signs, then both directions of each equality
        nr = set(fp.needle_rows)
        for i in range(fp.a_ineq.shape[0]):
            if i not in nr:
                rows_a.append(np.concatenate([fp.a_ineq[i], np.zeros(n_needles)]))
                rows_b.append(fp.b_ineq[i])
        for i in range(fp.a_eq.shape[0]):
            rows_a.append(np.concatenate([fp.a_eq[i], np.zeros(n_needles)]))
            rows_b.append(fp.b_eq[i])
            rows_a.append(np.concatenate([-fp.a_eq[i], np.zeros(n_needles)]))
            rows_b.append(-fp.b_eq[i])
        # soft needle rows: coef . lambda - s_i <= b_i, s_i >= 0
        for pos, i in enumerate(fp.needle_rows):
            soft = np.concatenate([fp.a_ineq[i], np.zeros(n_needles)])
            soft[m + pos] = -1.0
            rows_a.append(soft)
            rows_b.append(fp.b_ineq[i])
            nonneg = np.zeros(m + n_needles)
            nonneg[m + pos] = -1.0
            rows_a.append(nonneg)
            rows_b.append(0.0)
        c = np.concatenate([np.zeros(m), np.ones(n_needles)])
        res = simplex.solve_inequalities(np.array(rows_a), np.array(rows_b),
                                         objective=c, pivot_tol=tol.pivot_tol,
                                         feas_tol=tol.feasible_tol)
        if res.status != "optimal":
            continue  # (a)-(d) infeasible under this pattern
        any_pattern = True
        best = np.minimum(best, np.maximum(res.x[m:], 0.0))

    witnesses = []
    if any_pattern:
        for pos, (theta, v) in enumerate(
                zip(packet.thetas(), (nd.v for nd in packet.needles))):
            if best[pos] > tol.marginal_tol:
                witnesses.append(Witness(theta=float(theta), v=v,
                                         margin=float(best[pos]), certified=True))
        witnesses.sort(key=lambda w: -w.margin)
    if not witnesses:
        # violation is joint across rows (or no pattern admits (a)-(d));
        # report the row that resists most, uncertified
        if any_pattern and np.isfinite(best).any():
            pos = int(np.argmax(np.where(np.isfinite(best), best, -np.inf)))
            nd = packet.needles[pos]
            witnesses.append(Witness(theta=nd.theta, v=nd.v,
                                     margin=float(best[pos]), certified=False))
    return tuple(witnesses)


def certify_refine(prob: ControlProblem, cand: CandidateProcess,
                   schedule: RefinementSchedule | None = None,
                   tolerances: Tolerances = Tolerances(),
                   steps_per_unit: int | None = None, seed: int = 0,
                   u_cap: int = 64) -> Verdict:
    """Run the staged certification loop on a fixed-time problem.

    Raises AdmissibilityError when the candidate fails its own constraints;
    otherwise returns a Certificate, Violation, or Marginal verdict.
    """
    report = check_admissibility(prob, cand, tolerances.tol_feas)
    if not report.admissible:
        raise AdmissibilityError(report)
    if schedule is None:
        schedule = RefinementSchedule.default(len(prob.control_samples), u_cap)

    packets = [stage_packet(prob, cand, c, u, seed, u_cap)
               for c, u in schedule.stages]
    all_thetas = tuple(np.unique(np.concatenate([p.thetas() for p in packets])))
    basis = compute_adjoint_basis(prob, cand, forced_times=all_thetas,
                                  steps_per_unit=steps_per_unit)

    records: list[StageRecord] = []
    result: FeasibilityResult | None = None
    for si, ((c, u), packet) in enumerate(zip(schedule.stages, packets), start=1):
        result = sign_pattern_search(prob, cand, basis, packet, tolerances)
        records.append(StageRecord(theta_count=c, u_count=u,
                                   packet_size=packet.size, status=result.status,
                                   phase1_value=result.phase1_value,
                                   sign_pattern=result.sign_pattern))
        if result.status == "infeasible":
            witnesses = _witnesses(prob, cand, basis, packet, tolerances)
            return Violation(stage_index=si, feasibility=result,
                             witnesses=witnesses, stage_records=tuple(records),
                             basis=basis)
        if result.status == "marginal":
            return Marginal(stage_index=si, feasibility=result,
                            stage_records=tuple(records), basis=basis)

    assert result is not None and result.multiplier is not None
    lam = result.multiplier
    vec = lam.as_vector()
    worst = float(np.max(result.needle_slacks())) if packets[-1].size else 0.0
    nesting = -np.inf
    for (c, u), packet in zip(schedule.stages[:-1], packets[:-1]):
        fp = assemble_constraints(prob, cand, basis, packet, tolerances,
                                  result.sign_pattern)
        rows = np.asarray(fp.needle_rows, dtype=int)
        if rows.size:
            slack = fp.a_ineq[rows] @ vec - fp.b_ineq[rows]
            nesting = max(nesting, float(np.max(slack)))
    if not np.isfinite(nesting):
        nesting = 0.0

    profile = hamiltonian_profile(prob, cand, lam, basis)
    scan = universal_max_scan(prob, cand, lam, basis)
    return Certificate(multiplier=lam, feasibility=result, hamiltonian=profile,
                       scan=scan, worst_needle_slack=worst,
                       nesting_max_slack=nesting, stage_records=tuple(records),
                       basis=basis)
