from .lp import LpInstance, LpResult, LpStatus, SimplexSolver, solve_lp
from .dispatch import (
    ControlDecision,
    HorizonProblem,
    build_problem,
    repair_complementarity,
    solve_one_shot,
    step_rhc,
)

__all__ = [
    "LpInstance", "LpResult", "LpStatus", "SimplexSolver", "solve_lp",
    "ControlDecision", "HorizonProblem", "build_problem",
    "repair_complementarity", "solve_one_shot", "step_rhc",
]
