"""Reduce a free-time problem to a fixed-time one by rescaling time.

New clock tau runs over the candidate's own interval; the old time becomes
the first state component and a positive control v is its rate:

    dt/dtau = v,     dx/dtau = v f(t, x, u),     v > 0.

The reference process uses v = 1, so t(tau) = tau and the state trajectory is
unchanged up to the added clock component.  Endpoint expressions over
(t0, x0, t1, x1) become expressions over the augmented endpoints.  Control
samples are the originals crossed with the v-grid {1 - dv, 1, 1 + dv}; needle
rows at v = 1 +- dv encode the two inequalities +-(psi_x . f + psi_t) <= 0,
i.e. the energy law psi_x . f + psi_t = 0 up to the row slack.

The adjoint component paired with the clock state is psi_t, recovered here
with its transversality and constancy diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import integrate
from .certify import (Certificate, RefinementSchedule, Verdict,
                      certify_refine, hamiltonian_profile)
from .exprlang import BinOp, Var, rename_variables
from .multipliers import AdjointBasis, MultiplierTuple, Tolerances
from .problem import (CandidateProcess, ControlProblem, EndpointData,
                      FixedTime, FreeTime, PiecewiseControl, ProblemError)


@dataclass(frozen=True, eq=False)
class TimeTransform:
    """Fixed-time image of a free-time problem under the v-rescaling.

    State ordering: x~1 = t, x~(i+1) = x_i.  Control ordering: u1..ur are the
    original components, u(r+1) = v.
    """

    problem: ControlProblem
    candidate: CandidateProcess
    original: ControlProblem
    original_candidate: CandidateProcess
    v_index: int
    delta_v: float


def v_change_transform(prob: ControlProblem, cand: CandidateProcess,
                       delta_v: float = 0.5,
                       steps_per_unit: int | None = None) -> TimeTransform:
    """Build the fixed-time image of (prob, cand) on [t0_hat, t1_hat]."""
    if not isinstance(prob.time_mode, FreeTime):
        raise ProblemError("v_change_transform expects a free-time problem")
    if not 0.0 < delta_v < 1.0:
        raise ProblemError(f"delta_v must lie in (0, 1), got {delta_v!r}")
    n, r = prob.n, prob.r
    v_name = f"u{r + 1}"

    state_map = {"t": "x1"}
    state_map.update({f"x{i + 1}": f"x{i + 2}" for i in range(n)})
    dyn = [Var(v_name)]
    for f_i in prob.dynamics:
        dyn.append(BinOp("*", Var(v_name), rename_variables(f_i, state_map)))

    ep_map = {"t0": "x0_1", "t1": "x1_1"}
    ep_map.update({f"x0_{i + 1}": f"x0_{i + 2}" for i in range(n)})
    ep_map.update({f"x1_{i + 1}": f"x1_{i + 2}" for i in range(n)})
    endpoint = EndpointData(
        f0=rename_variables(prob.endpoint.f0, ep_map),
        f_ineq=tuple(rename_variables(e, ep_map) for e in prob.endpoint.f_ineq),
        k_eq=tuple(rename_variables(e, ep_map) for e in prob.endpoint.k_eq))

    v_grid = (1.0 - delta_v, 1.0, 1.0 + delta_v)
    samples = tuple(np.concatenate([np.asarray(u, dtype=float), [v]])
                    for u in prob.control_samples for v in v_grid)

    fixed = ControlProblem(n=n + 1, r=r + 1, dynamics=tuple(dyn),
                           control_samples=samples, endpoint=endpoint,
                           time_mode=FixedTime(cand.t0, cand.t1))

    control = PiecewiseControl(
        breakpoints=cand.control.breakpoints.copy(),
        values=tuple(np.concatenate([v, [1.0]]) for v in cand.control.values))
    a = np.concatenate([[cand.t0], cand.initial_state])
    if steps_per_unit is None:
        steps_per_unit = integrate.infer_steps_per_unit(cand)
    candidate = integrate.make_candidate(fixed, control, a, steps_per_unit)
    return TimeTransform(problem=fixed, candidate=candidate, original=prob,
                         original_candidate=cand, v_index=r, delta_v=delta_v)


@dataclass(frozen=True, eq=False)
class PsiTProfile:
    """The clock-adjoint psi_t along the transformed candidate."""

    grid: np.ndarray
    psi_t: np.ndarray
    h_constant: float             # -midrange(psi_t): the Hamiltonian level
    energy_residual: float        # max |psi_x . f + psi_t| over nodes
    constancy_residual: float     # max - min of psi_t (autonomous problems)
    transversality_t0: float      # |psi_t(tau0) - l_t0|
    transversality_t1: float      # |psi_t(tau1) + l_t1|
    autonomous: bool


def recover_psi_t(transform: TimeTransform, lam: MultiplierTuple,
                  basis: AdjointBasis) -> PsiTProfile:
    """Split the transformed adjoint into (psi_t, psi_x) and report the energy
    law and transversality residuals for the original free-time problem."""
    psi = basis.psi_of(lam)
    psi_t = psi[:, 0]
    vec = lam.as_vector()
    # H~ along the candidate is psi_t + psi_x . f; it should vanish identically
    profile = hamiltonian_profile(transform.problem, transform.candidate, lam,
                                  basis)
    energy = float(np.max(np.abs(profile.values)))
    l_t0 = float(vec @ basis.x0_grads[:, 0])
    l_t1 = float(vec @ basis.x1_grads[:, 0])
    return PsiTProfile(
        grid=basis.grid, psi_t=psi_t,
        h_constant=float(-0.5 * (psi_t.max() + psi_t.min())),
        energy_residual=energy,
        constancy_residual=float(psi_t.max() - psi_t.min()),
        transversality_t0=abs(float(psi_t[0]) - l_t0),
        transversality_t1=abs(float(psi_t[-1]) + l_t1),
        autonomous=transform.original.autonomous)


def certify_free(prob: ControlProblem, cand: CandidateProcess,
                 schedule: RefinementSchedule | None = None,
                 tolerances: Tolerances = Tolerances(),
                 steps_per_unit: int | None = None, seed: int = 0,
                 u_cap: int = 64, delta_v: float = 0.5):
    """Transform a free-time problem and certify the image.

    Returns (transform, verdict, psi_t profile or None).
    """
    transform = v_change_transform(prob, cand, delta_v, steps_per_unit)
    if schedule is None:
        schedule = RefinementSchedule.default(
            len(transform.problem.control_samples), u_cap)
    verdict: Verdict = certify_refine(transform.problem, transform.candidate,
                                      schedule, tolerances, steps_per_unit,
                                      seed, u_cap)
    psi_t = None
    if isinstance(verdict, Certificate):
        psi_t = recover_psi_t(transform, verdict.multiplier, verdict.basis)
    return transform, verdict, psi_t
