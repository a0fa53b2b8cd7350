"""Risk-constrained dynamic programming for safety-critical stochastic control.

Finite-horizon optimal control of scalar affine systems under per-stage CVaR
bounds on the distance to a safe interval, with risk-constrained and
probabilistic safe-set extraction and Monte Carlo policy audits.
"""

from .bellman import (StageSolution, ValueTable, convex_envelope,
                      feasible_control_interval, stage_solve)
from .core import (CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid,
                   SystemModel, dilate, erode)
from .dp import (PolicyTable, SolveResult, backward_solve,
                 risk_constrained_safe_set, value_at)
from .probsafe import (InclusionCheck, InclusionReport, SafetyProbTable,
                       check_inclusions, probabilistic_safe_set,
                       safety_probability_dp)
from .risk import (LossSample, cvar, cvar_with_argmin, safety_loss_cvar,
                   set_distance, value_at_risk)
from .sim import SimReport, evaluate, rollout

__version__ = "0.1.0"

__all__ = [
    "IntervalSet", "SystemModel", "RiskSpec", "CostSpec", "StateGrid",
    "ProblemConfig", "dilate", "erode",
    "LossSample", "set_distance", "value_at_risk", "cvar", "cvar_with_argmin",
    "safety_loss_cvar",
    "ValueTable", "StageSolution", "feasible_control_interval", "stage_solve",
    "convex_envelope",
    "PolicyTable", "SolveResult", "backward_solve", "risk_constrained_safe_set",
    "value_at",
    "SafetyProbTable", "safety_probability_dp", "probabilistic_safe_set",
    "check_inclusions", "InclusionCheck", "InclusionReport",
    "SimReport", "rollout", "evaluate",
    "__version__",
]
