"""Distributionally robust tail-probability bounds under orthounimodality."""
from .calibration import CalibrationConfig, SampleSet, calibrate
from .constraints import ConstraintSet, MomentRow
from .errors import (CalibrationError, DegenerateAtomError, GeometryDomainError, InfeasibleError,
                     TailboundError)
from .geometry import AxisRectangle, RareEventBoundary, StaircaseAtom, StepFunction, dominating_staircase
from .oracle import GridSpec, grid_lp_bound, verify_report
from .pou import PouProblem, recover_1pou, solve_1pou
from .solver import SolveReport, SolverOptions, build_problem, recover_density, solve, solve_fixed_c

__all__ = [
    "AxisRectangle", "CalibrationConfig", "CalibrationError", "ConstraintSet", "DegenerateAtomError",
    "GeometryDomainError", "GridSpec", "InfeasibleError", "MomentRow", "PouProblem", "RareEventBoundary",
    "SampleSet", "SolveReport", "SolverOptions", "StaircaseAtom", "StepFunction", "TailboundError",
    "build_problem", "calibrate", "dominating_staircase", "grid_lp_bound", "recover_1pou", "recover_density",
    "solve", "solve_1pou", "solve_fixed_c", "verify_report",
]
__version__ = "0.1.0"
