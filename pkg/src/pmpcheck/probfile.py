"""Problem files: a small sectioned key-value format.

    # comment lines and blank lines are ignored
    [system]
    n = 2
    r = 1
    dynamics = x2 ; u1          # one expression per state; ';' separates,
                                # or repeat the key on more lines
    time = fixed 0 2            # or: time = free

    [controls]
    samples = -1 ; 1            # explicit control vectors, or:
    # box = -1 1                # per-axis min max ...
    # grid = 5                  # points per axis (cartesian product)

    [endpoint]
    F0 = x1_1                   # endpoint cost
    F = ...                     # optional inequality block, <= 0 each
    K = x0_1 - 1 ; x0_2         # optional equality block, = 0 each

    [candidate]
    breakpoints = 0 1 2
    values = -1 ; 1             # one control vector per segment
    x0 = 1 0

Endpoint expressions use x0_i, x1_i, and (for free-time problems) t0, t1.
Dynamics use t, x1..xn, u1..ur.  Errors carry the offending line number.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from . import exprlang, integrate
from .exprlang import ExprSyntaxError
from .problem import (CandidateProcess, ControlProblem, EndpointData,
                      FixedTime, FreeTime, PiecewiseControl, ProblemError)

_SECTIONS = ("system", "controls", "endpoint", "candidate")


class ProblemFileError(ValueError):
    """Malformed problem file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _scan(text: str):
    """Return {section: {key: [(value, line), ...]}}."""
    data: dict[str, dict[str, list[tuple[str, int]]]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ProblemFileError("unterminated section header", lineno)
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise ProblemFileError(f"unknown section [{name}]", lineno)
            section = data.setdefault(name, {})
            continue
        if section is None:
            raise ProblemFileError("content before any [section]", lineno)
        if "=" not in line:
            raise ProblemFileError(f"expected 'key = value', got {line!r}", lineno)
        key, value = line.split("=", 1)
        section.setdefault(key.strip().lower(), []).append((value.strip(), lineno))
    return data


def _single(sec: dict, key: str, section: str, required=True):
    entries = sec.get(key, [])
    if not entries:
        if required:
            raise ProblemFileError(f"missing key {key!r} in [{section}]")
        return None, None
    if len(entries) > 1:
        raise ProblemFileError(f"key {key!r} given more than once in [{section}]",
                               entries[1][1])
    return entries[0]


def _exprs(sec: dict, key: str) -> list[tuple[str, int]]:
    """Gather a ';'-separated, possibly repeated, expression list."""
    out = []
    for value, line in sec.get(key, []):
        for piece in value.split(";"):
            piece = piece.strip()
            if piece:
                out.append((piece, line))
    return out


def _parse_expr(text: str, line: int):
    try:
        return exprlang.parse(text)
    except ExprSyntaxError as err:
        raise ProblemFileError(f"in expression {text!r}: {err}", line) from err


def _floats(text: str, line: int) -> list[float]:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as err:
        raise ProblemFileError(f"expected numbers, got {text!r}", line) from err


def _int(text: str, line: int, key: str) -> int:
    try:
        return int(text)
    except ValueError as err:
        raise ProblemFileError(f"{key} must be an integer, got {text!r}",
                               line) from err


def loads_problem(text: str, steps_per_unit: int = integrate.DEFAULT_STEPS_PER_UNIT):
    """Parse problem text; returns (ControlProblem, CandidateProcess)."""
    data = _scan(text)
    for name in _SECTIONS:
        if name not in data:
            raise ProblemFileError(f"missing section [{name}]")
    system, controls = data["system"], data["controls"]
    endpoint_sec, candidate = data["endpoint"], data["candidate"]

    n = _int(*_single(system, "n", "system"), key="n")
    r = _int(*_single(system, "r", "system"), key="r")

    dyn_entries = _exprs(system, "dynamics")
    if not dyn_entries:
        raise ProblemFileError("missing key 'dynamics' in [system]")
    if len(dyn_entries) != n:
        raise ProblemFileError(
            f"{len(dyn_entries)} dynamics expressions for n={n}",
            dyn_entries[-1][1])
    dynamics = tuple(_parse_expr(t, l) for t, l in dyn_entries)

    time_text, time_line = _single(system, "time", "system")
    tokens = time_text.split()
    if tokens[0] == "fixed":
        if len(tokens) != 3:
            raise ProblemFileError("expected 'time = fixed t0 t1'", time_line)
        t0, t1 = _floats(" ".join(tokens[1:]), time_line)
        time_mode = FixedTime(t0, t1)
    elif tokens[0] == "free":
        if len(tokens) != 1:
            raise ProblemFileError("expected 'time = free'", time_line)
        time_mode = FreeTime()
    else:
        raise ProblemFileError(
            f"time must be 'fixed t0 t1' or 'free', got {time_text!r}", time_line)

    # control samples
    if "samples" in controls:
        sample_entries = []
        for value, line in controls["samples"]:
            for piece in value.split(";"):
                piece = piece.strip()
                if piece:
                    sample_entries.append((_floats(piece, line), line))
        samples = []
        for vec, line in sample_entries:
            if len(vec) != r:
                raise ProblemFileError(
                    f"control sample {vec} does not have r={r} components", line)
            samples.append(np.array(vec))
    elif "box" in controls:
        box_text, box_line = _single(controls, "box", "controls")
        bounds = _floats(box_text, box_line)
        if len(bounds) != 2 * r:
            raise ProblemFileError(
                f"box needs {2 * r} numbers (min max per axis), got {len(bounds)}",
                box_line)
        grid_text, grid_line = _single(controls, "grid", "controls")
        g = _int(grid_text, grid_line, "grid")
        if g < 2:
            raise ProblemFileError("grid must be at least 2", grid_line)
        axes = []
        for j in range(r):
            lo, hi = bounds[2 * j], bounds[2 * j + 1]
            if hi < lo:
                raise ProblemFileError(f"axis {j + 1}: max {hi} < min {lo}", box_line)
            axes.append(np.linspace(lo, hi, g))
        samples = [np.array(combo) for combo in itertools.product(*axes)]
    else:
        raise ProblemFileError("[controls] needs either 'samples' or 'box'+'grid'")

    f0_text, f0_line = _single(endpoint_sec, "f0", "endpoint")
    f0 = _parse_expr(f0_text, f0_line)
    f_ineq = tuple(_parse_expr(t, l) for t, l in _exprs(endpoint_sec, "f"))
    k_eq = tuple(_parse_expr(t, l) for t, l in _exprs(endpoint_sec, "k"))
    endpoint = EndpointData(f0=f0, f_ineq=f_ineq, k_eq=k_eq)

    try:
        prob = ControlProblem(n=n, r=r, dynamics=dynamics,
                              control_samples=tuple(samples),
                              endpoint=endpoint, time_mode=time_mode)
    except ProblemError as err:
        raise ProblemFileError(str(err)) from err

    bp_text, bp_line = _single(candidate, "breakpoints", "candidate")
    breakpoints = _floats(bp_text, bp_line)
    val_entries = []
    for value, line in candidate.get("values", []):
        for piece in value.split(";"):
            piece = piece.strip()
            if piece:
                val_entries.append((_floats(piece, line), line))
    if not val_entries:
        raise ProblemFileError("missing key 'values' in [candidate]")
    for vec, line in val_entries:
        if len(vec) != r:
            raise ProblemFileError(
                f"segment value {vec} does not have r={r} components", line)
    if len(val_entries) != len(breakpoints) - 1:
        raise ProblemFileError(
            f"{len(val_entries)} segment values for {len(breakpoints) - 1} segments",
            val_entries[-1][1])
    x0_text, x0_line = _single(candidate, "x0", "candidate")
    x0 = _floats(x0_text, x0_line)
    if len(x0) != n:
        raise ProblemFileError(f"x0 has {len(x0)} components for n={n}", x0_line)

    if isinstance(time_mode, FixedTime):
        if abs(breakpoints[0] - time_mode.t0) > 1e-12 or \
           abs(breakpoints[-1] - time_mode.t1) > 1e-12:
            raise ProblemFileError(
                f"candidate breakpoints span [{breakpoints[0]}, {breakpoints[-1]}] "
                f"but the fixed interval is [{time_mode.t0}, {time_mode.t1}]",
                bp_line)

    try:
        control = PiecewiseControl(breakpoints=np.array(breakpoints),
                                   values=tuple(np.array(v) for v, _ in val_entries))
        cand = integrate.make_candidate(prob, control, np.array(x0), steps_per_unit)
    except ProblemError as err:
        raise ProblemFileError(str(err)) from err
    return prob, cand


def load_problem(path, steps_per_unit: int = integrate.DEFAULT_STEPS_PER_UNIT):
    """Read and parse a problem file from disk."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ProblemFileError(f"{path}: {err}") from err
    try:
        return loads_problem(text, steps_per_unit)
    except ProblemFileError as err:
        raise ProblemFileError(f"{path}: {err}", None) from err


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_problem(prob: ControlProblem, cand: CandidateProcess) -> str:
    """Serialize a problem + candidate back to the file format."""
    lines = ["[system]", f"n = {prob.n}", f"r = {prob.r}"]
    for e in prob.dynamics:
        lines.append(f"dynamics = {exprlang.to_string(e)}")
    if isinstance(prob.time_mode, FixedTime):
        lines.append(f"time = fixed {_fmt(prob.time_mode.t0)} {_fmt(prob.time_mode.t1)}")
    else:
        lines.append("time = free")

    lines.append("")
    lines.append("[controls]")
    for s in prob.control_samples:
        lines.append("samples = " + " ".join(_fmt(c) for c in s))

    lines.append("")
    lines.append("[endpoint]")
    lines.append(f"F0 = {exprlang.to_string(prob.endpoint.f0)}")
    for e in prob.endpoint.f_ineq:
        lines.append(f"F = {exprlang.to_string(e)}")
    for e in prob.endpoint.k_eq:
        lines.append(f"K = {exprlang.to_string(e)}")

    lines.append("")
    lines.append("[candidate]")
    lines.append("breakpoints = " + " ".join(_fmt(b) for b in cand.control.breakpoints))
    for v in cand.control.values:
        lines.append("values = " + " ".join(_fmt(c) for c in v))
    lines.append("x0 = " + " ".join(_fmt(c) for c in cand.initial_state))
    lines.append("")
    return "\n".join(lines)
