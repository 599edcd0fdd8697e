import numpy as np
import pytest

from pmpcheck import (FixedTime, FreeTime, ProblemFileError, dump_problem,
                      load_problem, loads_problem)
from pmpcheck.exprlang import to_string

from conftest import PROBLEMS

# 1-based line numbers in this template are load-bearing for the error tests
TEMPLATE = [
    "[system]",          # 1
    "n = 1",             # 2
    "r = 1",             # 3
    "dynamics = u1",     # 4
    "time = fixed 0 1",  # 5
    "[controls]",        # 6
    "samples = -1 ; 1",  # 7
    "[endpoint]",        # 8
    "F0 = x1_1",         # 9
    "K = x0_1",          # 10
    "[candidate]",       # 11
    "breakpoints = 0 1",  # 12
    "values = -1",       # 13
    "x0 = 0",            # 14
]


def text_with(line_no=None, replacement=None, drop=None):
    lines = list(TEMPLATE)
    if drop is not None:
        del lines[drop - 1]
    if line_no is not None:
        lines[line_no - 1] = replacement
    return "\n".join(lines)


def test_basic_parse():
    prob, cand = loads_problem(text_with(), steps_per_unit=10)
    assert (prob.n, prob.r) == (1, 1)
    assert to_string(prob.dynamics[0]) == "u1"
    assert isinstance(prob.time_mode, FixedTime)
    assert [s.tolist() for s in prob.control_samples] == [[-1.0], [1.0]]
    assert to_string(prob.endpoint.f0) == "x1_1"
    assert prob.endpoint.f_ineq == ()
    assert to_string(prob.endpoint.k_eq[0]) == "x0_1"
    assert cand.grid.size == 11            # steps_per_unit forwarded
    assert cand.initial_state.tolist() == [0.0]


def test_comments_and_repeated_keys():
    text = """
    # steering again, spread out
    [system]
    n = 2
    r = 1
    dynamics = x2      # first component
    dynamics = u1
    time = fixed 0 1
    [controls]
    samples = -1
    samples = 1
    [endpoint]
    F0 = x1_1 ^ 2 + x1_2 ^ 2
    [candidate]
    breakpoints = 0 1
    values = 1
    x0 = 0 0
    """
    prob, cand = loads_problem(text, steps_per_unit=10)
    assert [to_string(e) for e in prob.dynamics] == ["x2", "u1"]
    assert len(prob.control_samples) == 2


def test_box_grid_samples():
    text = text_with(7, "box = -1 1").replace("[endpoint]",
                                              "grid = 3\n[endpoint]")
    prob, _ = loads_problem(text, steps_per_unit=10)
    assert [s.tolist() for s in prob.control_samples] == [[-1.0], [0.0], [1.0]]


def test_box_grid_cartesian_product():
    text = """
    [system]
    n = 1
    r = 2
    dynamics = u1 + u2
    time = fixed 0 1
    [controls]
    box = 0 1 -2 2
    grid = 2
    [endpoint]
    F0 = x1_1
    [candidate]
    breakpoints = 0 1
    values = 0 -2
    x0 = 0
    """
    prob, _ = loads_problem(text, steps_per_unit=10)
    got = sorted(tuple(s) for s in prob.control_samples)
    assert got == [(0.0, -2.0), (0.0, 2.0), (1.0, -2.0), (1.0, 2.0)]


@pytest.mark.parametrize("line_no,replacement,fragment", [
    (1, "[system", "unterminated section header"),
    (1, "[syst]", "unknown section [syst]"),
    (2, "n 1", "expected 'key = value'"),
    (2, "n = one", "n must be an integer"),
    (4, "dynamics = u1 +", "in expression 'u1 +'"),
    (4, "dynamics = u1 ; x1", "2 dynamics expressions for n=1"),
    (5, "time = maybe", "'fixed t0 t1' or 'free'"),
    (5, "time = fixed 0", "expected 'time = fixed t0 t1'"),
    (5, "time = free 3", "expected 'time = free'"),
    (7, "samples = -1 2 ; 1", "does not have r=1 components"),
    (12, "breakpoints = 0 2", "fixed interval is [0.0, 1.0]"),
    (12, "breakpoints = 0 x", "expected numbers"),
    (13, "values = -1 ; 1", "2 segment values for 1 segments"),
    (14, "x0 = 0 1", "x0 has 2 components for n=1"),
])
def test_error_lines(line_no, replacement, fragment):
    with pytest.raises(ProblemFileError) as exc:
        loads_problem(text_with(line_no, replacement))
    assert exc.value.line == line_no
    assert fragment in str(exc.value)
    assert str(exc.value).startswith(f"line {line_no}:")


def test_content_before_section():
    with pytest.raises(ProblemFileError) as exc:
        loads_problem(text_with(drop=1))
    assert exc.value.line == 1
    assert "before any [section]" in str(exc.value)


def test_duplicate_key_reports_second_line():
    lines = list(TEMPLATE)
    lines.insert(2, "n = 2")
    with pytest.raises(ProblemFileError) as exc:
        loads_problem("\n".join(lines))
    assert exc.value.line == 3
    assert "more than once" in str(exc.value)


@pytest.mark.parametrize("drop,fragment", [
    (9, "missing key 'f0'"),
    (13, "missing key 'values'"),
])
def test_missing_keys(drop, fragment):
    with pytest.raises(ProblemFileError, match="missing key") as exc:
        loads_problem(text_with(drop=drop))
    assert fragment in str(exc.value)
    assert exc.value.line is None


def test_missing_section():
    text = "\n".join(TEMPLATE[:5] + TEMPLATE[7:])
    with pytest.raises(ProblemFileError, match=r"missing section \[controls\]"):
        loads_problem(text)


def test_controls_need_samples_or_box():
    text = text_with(7, "priors = none")
    with pytest.raises(ProblemFileError, match="'samples' or 'box'"):
        loads_problem(text)


@pytest.mark.parametrize("box,grid,fragment", [
    ("box = -1", "grid = 3", "box needs 2 numbers"),
    ("box = -1 1", "grid = 1", "grid must be at least 2"),
    ("box = 1 -1", "grid = 3", "max -1.0 < min 1.0"),
])
def test_box_grid_errors(box, grid, fragment):
    text = text_with(7, box).replace("[endpoint]", grid + "\n[endpoint]")
    with pytest.raises(ProblemFileError) as exc:
        loads_problem(text)
    assert fragment in str(exc.value)


def test_dump_is_canonical():
    # serialize o parse is a fixed point on its own output
    prob, cand = loads_problem(text_with(), steps_per_unit=10)
    text = dump_problem(prob, cand)
    prob2, cand2 = loads_problem(text, steps_per_unit=10)
    assert dump_problem(prob2, cand2) == text
    assert [to_string(e) for e in prob2.dynamics] == \
        [to_string(e) for e in prob.dynamics]
    assert np.array_equal(cand2.control.breakpoints, cand.control.breakpoints)
    assert all(np.array_equal(a, b) for a, b in
               zip(cand2.control.values, cand.control.values))
    assert np.array_equal(cand2.initial_state, cand.initial_state)


def test_dump_free_time_round_trip():
    prob, cand = load_problem(PROBLEMS / "double_integrator.prob",
                              steps_per_unit=50)
    text = dump_problem(prob, cand)
    assert "time = free" in text
    prob2, cand2 = loads_problem(text, steps_per_unit=50)
    assert isinstance(prob2.time_mode, FreeTime)
    assert to_string(prob2.endpoint.f0) == to_string(prob.endpoint.f0)
    assert len(prob2.endpoint.k_eq) == 5
    assert np.allclose(cand2.states, cand.states)


def test_load_missing_file(tmp_path):
    with pytest.raises(ProblemFileError) as exc:
        load_problem(tmp_path / "nope.prob")
    assert "nope.prob" in str(exc.value)
    assert exc.value.line is None


def test_load_prefixes_path_on_parse_error(tmp_path):
    bad = tmp_path / "bad.prob"
    bad.write_text(text_with(14, "x0 = 0 1"))
    with pytest.raises(ProblemFileError) as exc:
        load_problem(bad)
    assert str(exc.value).startswith(str(bad))
    assert "line 14" in str(exc.value)
