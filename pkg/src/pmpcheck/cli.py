"""Command-line interface.

Subcommands:

    simulate     integrate the candidate and print a CSV trajectory table
    check        admissibility report for the candidate
    sensitivity  one-sided endpoint-map derivatives for a single needle
    certify      full staged certification; text or JSON report
    transform    print the fixed-time image of a free-time problem

Exit codes: 0 success / certificate, 2 violation, 3 marginal verdict,
1 for every error (bad arguments, malformed files, inadmissible candidates).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .certify import (AdmissibilityError, Certificate, Marginal,
                      RefinementSchedule, Violation, certify_refine)
from .exprlang import ExprError
from .integrate import DEFAULT_STEPS_PER_UNIT, IntegrationError
from .multipliers import Tolerances
from .needle import LayoutError, NeedleSpec, initial_state_derivative, \
    needle_right_derivative
from .probfile import ProblemFileError, dump_problem, load_problem
from .problem import FixedTime, ProblemError, check_admissibility
from .timefree import certify_free, v_change_transform


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for violation
    verdicts, so route usage errors to status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pmpcheck",
                     description="first-order optimality checks for candidate "
                                 "optimal-control processes")
    parser.add_argument("--version", action="version",
                        version=f"pmpcheck {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_common(p):
        p.add_argument("file", help="problem file")
        p.add_argument("--steps", type=int, default=DEFAULT_STEPS_PER_UNIT,
                       metavar="N", help="integration steps per unit time "
                       f"(default {DEFAULT_STEPS_PER_UNIT})")

    p = sub.add_parser("simulate", help="integrate the candidate control")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("check", help="candidate admissibility report")
    add_common(p)
    p.add_argument("--tol", type=float, default=1e-6, metavar="T",
                   help="admissibility tolerance (default 1e-6)")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("sensitivity",
                       help="one-sided endpoint-map derivatives for a needle")
    add_common(p)
    p.add_argument("--theta", type=float, required=True,
                   help="needle time (interior)")
    p.add_argument("--v", required=True, metavar="V1 [V2 ...]",
                   help="needle control value, space-separated components")
    p.add_argument("--a", default=None, metavar="A1 [A2 ...]",
                   help="also report the derivative along this initial-state "
                        "direction")
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("certify", help="staged certification of the candidate")
    add_common(p)
    p.add_argument("--stages", default=None, metavar="C1,C2,...",
                   help="needle-grid subdivision counts per stage "
                        "(default 8,16,32); each must divide the next")
    p.add_argument("--u-cap", type=int, default=64, metavar="N",
                   help="max control samples per needle time (default 64)")
    p.add_argument("--seed", type=int, default=0,
                   help="round-robin offset for control subsampling (default 0)")
    p.add_argument("--tol", type=float, default=None, metavar="T",
                   help="needle slack tolerance (default 1e-7)")
    p.add_argument("--delta-v", type=float, default=0.5, metavar="D",
                   help="clock-rate needle size for free-time problems "
                        "(default 0.5)")
    p.add_argument("--report", choices=("text", "json"), default="text",
                   help="report format (default text)")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("transform",
                       help="print the fixed-time image of a free-time problem")
    add_common(p)
    p.add_argument("--delta-v", type=float, default=0.5, metavar="D",
                   help="clock-rate needle size (default 0.5)")
    p.set_defaults(func=_cmd_transform)
    return parser


def _floats_arg(text: str, what: str) -> np.ndarray:
    try:
        vals = [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise SystemExit(f"error: {what} must be numbers, got {text!r}")
    if not vals:
        raise SystemExit(f"error: {what} is empty")
    return np.array(vals)


def _cmd_simulate(args) -> int:
    prob, cand = load_problem(args.file, steps_per_unit=args.steps)
    header = ["t"] + [f"x{i + 1}" for i in range(prob.n)] \
        + [f"u{j + 1}" for j in range(prob.r)]
    print(",".join(header))
    for k, t in enumerate(cand.grid):
        u = cand.control.value_at(float(t))
        row = [t, *cand.states[k], *u]
        print(",".join(format(float(c), ".12g") for c in row))
    return 0


def _cmd_check(args) -> int:
    prob, cand = load_problem(args.file, steps_per_unit=args.steps)
    report = check_admissibility(prob, cand, args.tol)
    print(f"dynamics residual   {report.dynamics_residual:.6e}")
    print(f"equality residual   {report.k_residual:.6e}"
          + (f"   K = {list(report.k_values)}" if report.k_values else ""))
    print(f"inequality slack    {report.f_slack:.6e}"
          + (f"   F = {list(report.f_values)}" if report.f_values else ""))
    print(f"tolerance           {report.tol_feas:.6e}")
    print(f"admissible          {'yes' if report.admissible else 'no'}")
    return 0 if report.admissible else 1


def _cmd_sensitivity(args) -> int:
    prob, cand = load_problem(args.file, steps_per_unit=args.steps)
    v = _floats_arg(args.v, "--v")
    if v.size != prob.r:
        raise SystemExit(f"error: --v has {v.size} components, expected {prob.r}")
    needle = NeedleSpec(theta=args.theta, v=tuple(float(c) for c in v))
    xbar = needle_right_derivative(prob, cand, needle, steps_per_unit=args.steps)
    print(f"needle: theta = {args.theta!r}, v = {list(map(float, v))}")
    print("dP/deps+ = " + " ".join(format(float(c), ".12g") for c in xbar))
    if args.a is not None:
        a = _floats_arg(args.a, "--a")
        if a.size != prob.n:
            raise SystemExit(
                f"error: --a has {a.size} components, expected {prob.n}")
        ybar = initial_state_derivative(prob, cand, a, steps_per_unit=args.steps)
        print(f"initial direction: a = {list(map(float, a))}")
        print("dP/da . a = " + " ".join(format(float(c), ".12g") for c in ybar))
    return 0


def _cmd_transform(args) -> int:
    prob, cand = load_problem(args.file, steps_per_unit=args.steps)
    tr = v_change_transform(prob, cand, delta_v=args.delta_v,
                            steps_per_unit=args.steps)
    sys.stdout.write(dump_problem(tr.problem, tr.candidate))
    return 0


# ---------------------------------------------------------------------------
# certify

def _parse_stages(text, n_samples: int, u_cap: int):
    if text is None:
        return None
    try:
        counts = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise SystemExit(f"error: --stages must be integers, got {text!r}")
    if not counts:
        raise SystemExit("error: --stages is empty")
    try:
        return RefinementSchedule.from_theta_counts(counts, n_samples, u_cap)
    except ValueError as err:
        raise SystemExit(f"error: {err}")


def _py(obj):
    """json-encodable copy (numpy scalars/arrays to plain python)."""
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    return obj


def _stage_dicts(records):
    return [{"stage": i, "theta_count": r.theta_count, "u_count": r.u_count,
             "rows": r.packet_size, "status": r.status,
             "phase1": r.phase1_value + 0.0,   # drop IEEE negative zero
             "sign_pattern": list(r.sign_pattern)}
            for i, r in enumerate(records, start=1)]


def _verdict_report(args, prob, cand, verdict, transform, psi_t):
    report = {
        "schema": 1,
        "command": "certify",
        "problem": {
            "n": prob.n, "r": prob.r,
            "n_samples": len(prob.control_samples),
            "time": ({"mode": "fixed", "t0": prob.time_mode.t0,
                      "t1": prob.time_mode.t1}
                     if isinstance(prob.time_mode, FixedTime)
                     else {"mode": "free", "t0": cand.t0, "t1": cand.t1}),
        },
        "stages": _stage_dicts(verdict.stage_records),
        "verdict": verdict.kind,
        "exit_code": {"certificate": 0, "violation": 2, "marginal": 3}[verdict.kind],
    }
    if transform is not None:
        report["transform"] = {
            "delta_v": transform.delta_v,
            "fixed_interval": [transform.candidate.t0, transform.candidate.t1],
            "n": transform.problem.n, "r": transform.problem.r,
            "n_samples": len(transform.problem.control_samples),
        }
    if isinstance(verdict, Certificate):
        lam = verdict.multiplier
        report["multiplier"] = {
            "alpha0": lam.alpha0,
            "alpha": list(lam.alpha), "beta": list(lam.beta),
            "sign_pattern": list(verdict.feasibility.sign_pattern),
        }
        report["needle"] = {
            "worst_slack": verdict.worst_needle_slack,
            "nesting_max_slack": verdict.nesting_max_slack,
        }
        h = verdict.hamiltonian
        report["hamiltonian"] = {
            "constant": h.constant,
            "constancy_residual": h.constancy_residual,
            "jumps": [[t, r] for t, r in h.jump_residuals],
            "max_jump": max((r for _, r in h.jump_residuals), default=0.0),
            "autonomous": h.autonomous,
        }
        s = verdict.scan
        report["scan"] = {"margin": s.margin, "at_time": s.at_time,
                          "at_control": list(s.at_control),
                          "n_times": s.n_times, "n_controls": s.n_controls}
        if psi_t is not None:
            report["psi_t"] = {
                "h_constant": psi_t.h_constant,
                "energy_residual": psi_t.energy_residual,
                "constancy_residual": psi_t.constancy_residual,
                "transversality_t0": psi_t.transversality_t0,
                "transversality_t1": psi_t.transversality_t1,
                "autonomous": psi_t.autonomous,
            }
    elif isinstance(verdict, Violation):
        fk = verdict.feasibility.farkas
        report["violation"] = {
            "stage": verdict.stage_index,
            "farkas": None if fk is None else {
                "b_dot": fk.b_dot, "max_a_residual": fk.a_residual,
                "n_rows": len(fk.labels), "verified": fk.verified(),
            },
            "witnesses": [{"theta": w.theta, "v": list(w.v),
                           "margin": w.margin, "certified": w.certified}
                          for w in verdict.witnesses],
        }
    elif isinstance(verdict, Marginal):
        report["marginal"] = {"stage": verdict.stage_index,
                              "phase1": verdict.feasibility.phase1_value}
    return _py(report)


def _print_text_report(report, admissibility):
    p = report["problem"]
    time = p["time"]
    span = f"free, candidate [{time['t0']:g}, {time['t1']:g}]" \
        if time["mode"] == "free" else f"fixed [{time['t0']:g}, {time['t1']:g}]"
    print(f"problem: n={p['n']} r={p['r']} samples={p['n_samples']} time={span}")
    if "transform" in report:
        tr = report["transform"]
        print(f"time rescaling: delta_v={tr['delta_v']:g} -> "
              f"n={tr['n']} r={tr['r']} samples={tr['n_samples']}")
    print(f"admissibility: dynamics {admissibility.dynamics_residual:.3e}  "
          f"equality {admissibility.k_residual:.3e}  "
          f"inequality {admissibility.f_slack:.3e}  "
          f"(tol {admissibility.tol_feas:.1e})")
    print()
    print("stage  thetas  controls   rows  status        phase-1")
    for s in report["stages"]:
        print(f"{s['stage']:>5}  {s['theta_count']:>6}  {s['u_count']:>8}  "
              f"{s['rows']:>5}  {s['status']:<12}  {s['phase1']:.3e}")
    print()
    print(f"verdict: {report['verdict'].upper()}")

    if report["verdict"] == "certificate":
        m = report["multiplier"]
        print(f"multiplier (sign pattern {m['sign_pattern']}):")
        print(f"  alpha0 = {m['alpha0']:.12g}")
        print(f"  alpha  = {[format(a, '.12g') for a in m['alpha']]}")
        print(f"  beta   = {[format(b, '.12g') for b in m['beta']]}")
        nd = report["needle"]
        print(f"needle rows: worst slack {nd['worst_slack']:.3e}  "
              f"nesting max slack {nd['nesting_max_slack']:.3e}")
        h = report["hamiltonian"]
        print(f"hamiltonian: constant {h['constant']:.12g}  "
              f"constancy residual {h['constancy_residual']:.3e}  "
              f"max jump {h['max_jump']:.3e}")
        s = report["scan"]
        print(f"scan: margin {s['margin']:.3e} at t={s['at_time']:g} "
              f"v={s['at_control']}  ({s['n_times']} times x "
              f"{s['n_controls']} controls)")
        if "psi_t" in report:
            q = report["psi_t"]
            print(f"clock adjoint: H = {q['h_constant']:.12g}  "
                  f"energy residual {q['energy_residual']:.3e}  "
                  f"constancy {q['constancy_residual']:.3e}")
            print(f"  transversality: t0 {q['transversality_t0']:.3e}  "
                  f"t1 {q['transversality_t1']:.3e}")
    elif report["verdict"] == "violation":
        v = report["violation"]
        print(f"multiplier system infeasible at stage {v['stage']}")
        fk = v["farkas"]
        if fk is not None:
            status = "verified" if fk["verified"] else "NOT verified"
            print(f"farkas certificate: y.b = {fk['b_dot']:.3e}  "
                  f"max|y.A| = {fk['max_a_residual']:.3e}  ({status})")
        for w in v["witnesses"]:
            tag = "certified" if w["certified"] else "indicative"
            print(f"witness ({tag}): theta = {w['theta']:.9g}  v = {w['v']}  "
                  f"margin = {w['margin']:.6e}")
    else:
        mg = report["marginal"]
        print(f"decision is tolerance-sensitive at stage {mg['stage']} "
              f"(phase-1 value {mg['phase1']:.3e}); tighten tolerances or "
              f"refine the discretization")
    return report["exit_code"]


def _cmd_certify(args) -> int:
    prob, cand = load_problem(args.file, steps_per_unit=args.steps)
    tolerances = Tolerances() if args.tol is None \
        else Tolerances(slack_tol=args.tol)
    free = not isinstance(prob.time_mode, FixedTime)
    n_for_schedule = (3 * len(prob.control_samples)) if free \
        else len(prob.control_samples)
    schedule = _parse_stages(args.stages, n_for_schedule, args.u_cap)

    admissibility = check_admissibility(prob, cand, tolerances.tol_feas)
    transform = psi_t = None
    if free:
        transform, verdict, psi_t = certify_free(
            prob, cand, schedule=schedule, tolerances=tolerances,
            steps_per_unit=args.steps, seed=args.seed, u_cap=args.u_cap,
            delta_v=args.delta_v)
    else:
        verdict = certify_refine(prob, cand, schedule=schedule,
                                 tolerances=tolerances,
                                 steps_per_unit=args.steps, seed=args.seed,
                                 u_cap=args.u_cap)

    report = _verdict_report(args, prob, cand, verdict, transform, psi_t)
    if args.report == "json":
        report["admissibility"] = _py({
            "dynamics_residual": admissibility.dynamics_residual,
            "k_residual": admissibility.k_residual,
            "f_slack": admissibility.f_slack,
            "tol": admissibility.tol_feas,
        })
        print(json.dumps(report, indent=2, sort_keys=True))
        return report["exit_code"]
    return _print_text_report(report, admissibility)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AdmissibilityError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ProblemFileError, ProblemError, IntegrationError, LayoutError,
            ExprError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:
        # _floats_arg and friends raise SystemExit with a message
        if isinstance(err.code, str):
            print(err.code, file=sys.stderr)
            return 1
        return err.code if err.code is not None else 0


if __name__ == "__main__":
    sys.exit(main())
