import numpy as np
import pytest

from pmpcheck import (ControlProblem, EndpointData, FixedTime, FreeTime,
                      PiecewiseControl, ProblemError, check_admissibility,
                      load_problem)
from pmpcheck.exprlang import parse

from conftest import PROBLEMS, make, STEER


def _prob(dyn, n=1, r=1, samples=((-1.0,), (1.0,)), f0="x1_1",
          f=(), k=(), time=FixedTime(0.0, 1.0)):
    return ControlProblem(
        n=n, r=r, dynamics=tuple(parse(d) for d in dyn),
        control_samples=tuple(np.array(s) for s in samples),
        endpoint=EndpointData(f0=parse(f0),
                              f_ineq=tuple(parse(x) for x in f),
                              k_eq=tuple(parse(x) for x in k)),
        time_mode=time)


# ---------------------------------------------------------------------------
# construction and validation

def test_dimension_checks():
    with pytest.raises(ProblemError):
        _prob(["u1", "u1"])                      # 2 dynamics for n=1
    with pytest.raises(ProblemError):
        _prob(["u1"], samples=((1.0, 2.0),))     # sample dim != r
    with pytest.raises(ProblemError):
        _prob(["u2"])                            # unknown control
    with pytest.raises(ProblemError):
        _prob(["x2"])                            # unknown state
    with pytest.raises(ProblemError):
        _prob(["u1"], f0="x2_1")                 # bad endpoint variable
    with pytest.raises(ProblemError):
        _prob(["u1"], samples=())                # empty control set


def test_free_time_admits_t_in_endpoint():
    p = _prob(["u1"], f0="t1 - t0", k=("t0", "x0_1"), time=FreeTime())
    assert p.d_k == 2 and p.d_f == 0
    # fixed-time problems must not mention t0/t1 in endpoint data
    with pytest.raises(ProblemError):
        _prob(["u1"], f0="t1 - t0")


def test_autonomous_flag_is_syntactic():
    assert _prob(["u1 * x1"]).autonomous
    assert not _prob(["u1 + t"]).autonomous


def test_delta_f():
    p = _prob(["u1 * x1"])
    d = p.delta_f(0.0, np.array([2.0]), np.array([1.0]), np.array([-1.0]))
    assert d == pytest.approx([4.0])   # 1*2 - (-1)*2


# ---------------------------------------------------------------------------
# piecewise controls

def test_control_left_continuity():
    c = PiecewiseControl(breakpoints=np.array([0.0, 1.0, 2.0]),
                         values=(np.array([-1.0]), np.array([1.0])))
    assert c.value_at(0.5) == pytest.approx([-1.0])
    assert c.value_at(1.0) == pytest.approx([-1.0])   # incoming value
    assert c.value_at(1.0 + 1e-12) == pytest.approx([1.0])
    assert c.value_at(2.0) == pytest.approx([1.0])
    assert c.value_at(0.0) == pytest.approx([-1.0])   # clamped at t0


def test_control_validation():
    with pytest.raises(ProblemError):
        PiecewiseControl(breakpoints=np.array([0.0, 0.0, 1.0]),
                         values=(np.array([1.0]), np.array([2.0])))
    with pytest.raises(ProblemError):
        PiecewiseControl(breakpoints=np.array([0.0, 1.0]),
                         values=(np.array([1.0]), np.array([2.0])))


def test_candidate_requires_breakpoints_on_grid(steer):
    prob, cand = steer
    from pmpcheck.problem import CandidateProcess
    control = PiecewiseControl(breakpoints=np.array([0.0, 0.33333, 1.0]),
                               values=(np.array([-1.0]), np.array([1.0])))
    with pytest.raises(ProblemError):
        CandidateProcess(control=control, grid=cand.grid, states=cand.states)


def test_endpoint_env(di_fixed):
    prob, cand = di_fixed
    env = cand.endpoint_env()
    assert env["t0"] == 0.0 and env["t1"] == 2.0
    assert env["x0_1"] == pytest.approx(1.0)
    assert env["x0_2"] == pytest.approx(0.0)
    # u=-1 then +1 from (1,0): terminal (0,0)   [by hand]
    assert env["x1_1"] == pytest.approx(0.0, abs=1e-12)
    assert env["x1_2"] == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# admissibility

def test_admissible_fixture(steer):
    prob, cand = steer
    rep = check_admissibility(prob, cand)
    assert rep.admissible
    assert rep.dynamics_residual <= 1e-12
    assert rep.k_residual <= 1e-12


def test_inadmissible_fixture_values():
    prob, cand = load_problem(PROBLEMS / "di_miss.prob", steps_per_unit=500)
    rep = check_admissibility(prob, cand)
    assert not rep.admissible
    # switch at 0.9: terminal state (0.21, 0.2) instead of the origin [by hand]
    assert rep.k_residual == pytest.approx(0.21, abs=1e-9)
    assert rep.k_values[-2] == pytest.approx(0.21, abs=1e-9)
    assert rep.k_values[-1] == pytest.approx(0.20, abs=1e-9)


def test_inequality_slack_reported():
    prob, cand = make(STEER.replace("K = x0_1", "K = x0_1\nF = -1 - x1_1"))
    rep = check_admissibility(prob, cand)
    # terminal state is exactly -1, so F = -1 - x1 sits on its boundary
    assert rep.f_slack == pytest.approx(0.0, abs=1e-12)
    assert rep.admissible

    prob2, cand2 = make(STEER.replace("K = x0_1", "K = x0_1\nF = -0.5 - x1_1"))
    rep2 = check_admissibility(prob2, cand2)
    assert rep2.f_slack == pytest.approx(0.5, abs=1e-12)
    assert not rep2.admissible


def test_interval_mismatch_rejected(steer):
    prob, _ = steer
    prob2, cand2 = make(STEER.replace("fixed 0 1", "fixed 0 2")
                        .replace("breakpoints = 0 1", "breakpoints = 0 2"))
    with pytest.raises(ProblemError):
        check_admissibility(prob, cand2)
