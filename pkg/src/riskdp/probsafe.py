"""Safety-probability dynamic programming and safe-set inclusion checks.

The maximal probability of keeping the state inside the safe interval at
every stage satisfies the multiplicative recursion

    W_T(x) = 1{x in A}
    W_t(x) = max_u  sum_i  p_i * 1{f(x,u,w_i) in A} * W_{t+1}(f(x,u,w_i)),

with W_{t+1} evaluated by piecewise-linear interpolation clamped to [0,1]
(zero outside the grid).  For fixed x the objective is piecewise linear in u
with breakpoints where some sample successor crosses the safe-set boundary or
an interpolation node, so maximizing over the breakpoint set plus the control
bounds is exact up to interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import IntervalSet, ProblemConfig, StateGrid, SystemModel, dilate, erode
from .dp import SolveResult, backward_solve, risk_constrained_safe_set

__all__ = [
    "SafetyProbTable",
    "safety_probability_dp",
    "probabilistic_safe_set",
    "check_inclusions",
    "InclusionCheck",
    "InclusionReport",
]

_LEVEL_TOL = 1e-9
_COARSE_CONTROLS = 65


@dataclass(frozen=True, eq=False)
class SafetyProbTable:
    """Maximal stay-safe probabilities per stage and grid node."""

    grid: StateGrid
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] != self.grid.n:
            raise ValueError("probs must have shape (stages + 1, grid nodes)")
        if np.any(probs < -1e-12) or np.any(probs > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def horizon(self) -> int:
        return self.probs.shape[0] - 1


def _interp_prob(succ: np.ndarray, pts: np.ndarray, w_next: np.ndarray) -> np.ndarray:
    vals = np.clip(np.interp(succ, pts, w_next), 0.0, 1.0)
    return np.where((succ < pts[0]) | (succ > pts[-1]), 0.0, vals)


def _candidate_controls(model: SystemModel, x: float, targets: np.ndarray,
                        u_lo: float, u_hi: float) -> np.ndarray:
    cands = [np.array([u_lo, u_hi]), np.linspace(u_lo, u_hi, _COARSE_CONTROLS)]
    if model.b != 0:
        # u putting sample i exactly on a target: a*x + b*u - w_i = target
        cross = (targets[None, :] + model.samples[:, None] - model.a * x) / model.b
        cross = cross.ravel()
        cands.append(cross[(cross >= u_lo) & (cross <= u_hi)])
    return np.unique(np.concatenate(cands))


def safety_probability_dp(model: SystemModel, interval: IntervalSet, horizon: int,
                          grid: StateGrid,
                          u_bounds: tuple[float, float] | None = None) -> SafetyProbTable:
    """Run the multiplicative safety recursion over the grid.

    u_bounds overrides the model's control interval when given.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    u_lo, u_hi = u_bounds if u_bounds is not None else (model.u_lo, model.u_hi)
    if u_lo > u_hi:
        raise ValueError("empty control interval")
    pts = grid.points
    targets = np.concatenate([pts, [interval.lo, interval.hi]])

    probs = np.zeros((horizon + 1, grid.n))
    probs[horizon] = interval.contains(pts).astype(float)
    for t in range(horizon - 1, -1, -1):
        w_next = probs[t + 1]
        for i, x in enumerate(pts):
            us = _candidate_controls(model, float(x), targets, u_lo, u_hi)
            succ = model.successors(float(x), us)
            stays = interval.contains(succ)
            vals = stays * _interp_prob(succ, pts, w_next)
            probs[t, i] = float((vals @ model.weights).max())
    return SafetyProbTable(grid, probs)


def probabilistic_safe_set(table: SafetyProbTable, alpha: float) -> IntervalSet | None:
    """Interval hull of nodes whose stage-0 safety probability reaches alpha."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    idx = np.flatnonzero(table.probs[0] >= alpha - _LEVEL_TOL)
    if idx.size == 0:
        return None
    pts = table.grid.points
    return IntervalSet(float(pts[idx[0]]), float(pts[idx[-1]]))


@dataclass(frozen=True)
class InclusionCheck:
    """Outcome of one set comparison, at one-grid-cell tolerance."""

    name: str
    applicable: bool
    holds: bool
    lhs: IntervalSet | None
    rhs: IntervalSet | None
    offending_nodes: tuple[float, ...] = ()
    note: str = ""

    def to_dict(self) -> dict:
        as_pair = lambda s: None if s is None else [s.lo, s.hi]
        return {
            "name": self.name,
            "applicable": self.applicable,
            "holds": self.holds,
            "lhs": as_pair(self.lhs),
            "rhs": as_pair(self.rhs),
            "offending_nodes": list(self.offending_nodes),
            "note": self.note,
        }


@dataclass(frozen=True)
class InclusionReport:
    """Verification report relating risk-constrained and probabilistic safe sets."""

    alpha: float
    delta: float
    cell: float
    checks: tuple[InclusionCheck, ...] = field(default_factory=tuple)

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.checks if c.applicable)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "cell": self.cell,
            "all_hold": self.all_hold,
            "checks": [c.to_dict() for c in self.checks],
        }


def _nodes_outside(pts: np.ndarray, mask: np.ndarray,
                   hull: IntervalSet | None, cell: float) -> tuple[float, ...]:
    xs = pts[mask]
    if hull is None:
        return tuple(float(v) for v in xs)
    bad = (xs < hull.lo - cell) | (xs > hull.hi + cell)
    return tuple(float(v) for v in xs[bad])


def _subset_check(name, lhs, lhs_mask, rhs, rhs_mask, pts, cell, note=""):
    if lhs is None:
        return InclusionCheck(name, True, True, lhs, rhs, (), note or "left set empty")
    offending = _nodes_outside(pts, lhs_mask, rhs, cell)
    return InclusionCheck(name, True, len(offending) == 0, lhs, rhs, offending, note)


def _equality_check(name, lhs, lhs_mask, rhs, rhs_mask, pts, cell, note=""):
    if lhs is None and rhs is None:
        return InclusionCheck(name, True, True, lhs, rhs, (), note or "both sets empty")
    offending = (_nodes_outside(pts, lhs_mask, rhs, cell)
                 + _nodes_outside(pts, rhs_mask, lhs, cell))
    return InclusionCheck(name, True, len(offending) == 0, lhs, rhs, offending, note)


def check_inclusions(result: SolveResult, config: ProblemConfig) -> InclusionReport:
    """Cross-validate the solved risk-constrained sets against safety
    probabilities on the same grid.

    Checks, each at one-grid-cell tolerance:
      1. delta = 0: the risk-constrained set equals the certain-safety set
         (probability-1 states), independently of alpha.
      2. delta > 0: the risk-constrained set for A is contained in the
         probabilistic safe set of the dilated interval at level alpha**T.
      3. the risk-constrained set for the eroded interval is contained in the
         probabilistic safe set of A at level alpha**T (vacuous when the
         erosion is empty).
    """
    model, interval, risk = config.model, config.safe_set, config.risk
    T, grid = config.horizon, config.grid
    pts = grid.points
    cell = grid.cell_width
    alpha_T = risk.alpha ** T

    rs = risk_constrained_safe_set(result, 0)
    rs_mask = np.isfinite(result.values[0].values)
    table_a = safety_probability_dp(model, interval, T, grid)

    checks: list[InclusionCheck] = []

    if risk.delta == 0:
        s1 = probabilistic_safe_set(table_a, 1.0)
        s1_mask = table_a.probs[0] >= 1.0 - _LEVEL_TOL
        checks.append(_equality_check(
            "hard-tolerance set equals certain-safety set",
            rs, rs_mask, s1, s1_mask, pts, cell))
        checks.append(InclusionCheck(
            "risk-constrained set within probabilistic set of dilated interval",
            False, True, None, None, (), "requires delta > 0"))
    else:
        checks.append(InclusionCheck(
            "hard-tolerance set equals certain-safety set",
            False, True, None, None, (), "requires delta = 0"))
        dilated = dilate(interval, risk.delta)
        table_d = safety_probability_dp(model, dilated, T, grid)
        s_dil = probabilistic_safe_set(table_d, alpha_T)
        s_dil_mask = table_d.probs[0] >= alpha_T - _LEVEL_TOL
        checks.append(_subset_check(
            "risk-constrained set within probabilistic set of dilated interval",
            rs, rs_mask, s_dil, s_dil_mask, pts, cell))

    eroded = erode(interval, risk.delta)
    s_a = probabilistic_safe_set(table_a, alpha_T)
    s_a_mask = table_a.probs[0] >= alpha_T - _LEVEL_TOL
    if eroded is None:
        checks.append(InclusionCheck(
            "risk-constrained set of eroded interval within probabilistic set",
            True, True, None, s_a, (), "erosion empty; inclusion vacuous"))
    else:
        if eroded == interval:
            res_e = result
        else:
            res_e = backward_solve(replace(config, safe_set=eroded),
                                   envelope=result.envelope)
        rs_e = risk_constrained_safe_set(res_e, 0)
        rs_e_mask = np.isfinite(res_e.values[0].values)
        checks.append(_subset_check(
            "risk-constrained set of eroded interval within probabilistic set",
            rs_e, rs_e_mask, s_a, s_a_mask, pts, cell))

    return InclusionReport(risk.alpha, risk.delta, cell, tuple(checks))
