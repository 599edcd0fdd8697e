"""Numerical first-order optimality checks for bang-bang optimal control.

Given a control problem (dynamics, endpoint cost/constraints, finite control
sample set) and a candidate process, this package either produces a
certificate — a multiplier tuple satisfying adjoint, transversality, sign,
slackness, and needle-variation inequalities to stated tolerances — or a
refutation witness: a needle variation whose first-order effect no admissible
multiplier can dominate, backed by an infeasibility certificate for the
multiplier polytope.
"""

from .certify import (AdmissibilityError, Certificate, HamiltonianProfile,
                      Marginal, RefinementSchedule, ScanResult, StageRecord,
                      Violation, Witness, certify_refine, hamiltonian_profile,
                      stage_packet, stage_thetas, universal_max_scan)
from .exprlang import (Dual, ExprError, ExprEvalError, ExprSyntaxError,
                       evaluate, gradient, jacobian, parse, to_string)
from .extension import cone_lambda, cone_project, project_extend, reflect_extend
from .integrate import (DEFAULT_STEPS_PER_UNIT, IntegrationError, Trajectory,
                        integrate_adjoint, integrate_adjoint_matrix,
                        integrate_state, integrate_variational, make_candidate)
from .multipliers import (AdjointBasis, FarkasCertificate, FeasibilityProblem,
                          FeasibilityResult, MultiplierTuple, Tolerances,
                          assemble_constraints, compute_adjoint_basis,
                          sign_pattern_search, solve_feasibility)
from .needle import (IntervalLayout, LayoutError, NeedlePacket, NeedleSpec,
                     composite_derivatives, endpoint_map,
                     initial_state_derivative, layout_intervals,
                     needle_right_derivative, perturb_control)
from .probfile import ProblemFileError, dump_problem, load_problem, loads_problem
from .problem import (AdmissibilityReport, CandidateProcess, ControlProblem,
                      EndpointData, FixedTime, FreeTime, PiecewiseControl,
                      ProblemError, check_admissibility)
from .simplex import LpResult, SimplexCycleError, solve_inequalities
from .timefree import (PsiTProfile, TimeTransform, certify_free, recover_psi_t,
                       v_change_transform)

__version__ = "0.1.0"

__all__ = [
    "AdjointBasis", "AdmissibilityError", "AdmissibilityReport",
    "CandidateProcess", "Certificate", "ControlProblem",
    "DEFAULT_STEPS_PER_UNIT", "Dual", "EndpointData", "ExprError",
    "ExprEvalError", "ExprSyntaxError", "FarkasCertificate",
    "FeasibilityProblem", "FeasibilityResult", "FixedTime", "FreeTime",
    "HamiltonianProfile", "IntegrationError", "IntervalLayout", "LayoutError",
    "LpResult", "Marginal", "MultiplierTuple", "NeedlePacket", "NeedleSpec",
    "PiecewiseControl", "ProblemError", "ProblemFileError", "PsiTProfile",
    "RefinementSchedule", "ScanResult", "SimplexCycleError", "StageRecord",
    "TimeTransform", "Tolerances", "Trajectory", "Violation", "Witness",
    "assemble_constraints", "certify_free", "certify_refine",
    "check_admissibility", "compute_adjoint_basis", "composite_derivatives",
    "cone_lambda", "cone_project", "dump_problem", "endpoint_map", "evaluate",
    "gradient", "hamiltonian_profile", "initial_state_derivative",
    "integrate_adjoint", "integrate_adjoint_matrix", "integrate_state",
    "integrate_variational", "jacobian", "layout_intervals", "load_problem",
    "loads_problem", "make_candidate", "needle_right_derivative", "parse",
    "perturb_control", "project_extend", "recover_psi_t", "reflect_extend",
    "sign_pattern_search", "solve_feasibility", "solve_inequalities",
    "stage_packet", "stage_thetas",
    "to_string", "universal_max_scan", "v_change_transform",
]
