"""Backward value recursion, Markov policy extraction and safe sets.

Sweeping the per-state stage solver backward in time yields one value table
per stage.  States with finite value at stage t are exactly those from which
every remaining safety risk constraint can be met, so the risk-constrained
safe set falls out of the recursion as the finite region of each table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bellman import ValueTable, _stage_solve_batch, convex_envelope
from .core import IntervalSet, ProblemConfig, StateGrid

__all__ = [
    "PolicyTable",
    "SolveResult",
    "backward_solve",
    "risk_constrained_safe_set",
    "value_at",
]


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Per-stage, per-node optimal controls and CVaR levels.

    Entries are nan exactly where the corresponding value is +inf.
    """

    grid: StateGrid
    u: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("u", "z"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[1] != self.grid.n:
                raise ValueError(f"{name} must have shape (stages, grid nodes)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    def control(self, t: int, x):
        """Stage-t control, linearly interpolated between feasible nodes and
        held constant beyond them."""
        u_t = self.u[t]
        mask = np.isfinite(u_t)
        if not mask.any():
            raise ValueError(f"no feasible control anywhere at stage {t}")
        return np.interp(x, self.grid.points[mask], u_t[mask])


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Backward recursion output: value tables for t = 0..T, the policy for
    t = 0..T-1, and the per-stage safe sets (None marks an empty set)."""

    values: tuple[ValueTable, ...]
    policy: PolicyTable
    safe_sets: tuple[IntervalSet | None, ...]
    config: ProblemConfig
    envelope: bool


def _finite_hull(grid: StateGrid, values: np.ndarray) -> IntervalSet | None:
    idx = np.flatnonzero(np.isfinite(values))
    if idx.size == 0:
        return None
    return IntervalSet(float(grid.points[idx[0]]), float(grid.points[idx[-1]]))


def backward_solve(config: ProblemConfig, envelope: bool | None = None) -> SolveResult:
    """Solve the horizon by backward induction over the state grid.

    envelope=None enforces the lower convex envelope of each stage's finite
    values exactly when the cost is declared convex; pass True/False to
    override.  Raises RuntimeError when the terminal cost is +inf on the
    whole grid.
    """
    if envelope is None:
        envelope = config.cost.convex
    grid = config.grid
    pts = grid.points
    T = config.horizon

    v_term = np.asarray(config.cost.terminal_cost(pts), dtype=float)
    v_term = np.broadcast_to(v_term, pts.shape).astype(float)
    if not np.isfinite(v_term).any():
        raise RuntimeError("degenerate grid: terminal cost is +inf at every node")

    values: list[ValueTable] = [None] * (T + 1)  # type: ignore[list-item]
    values[T] = ValueTable(grid, v_term)
    u_tab = np.full((T, grid.n), np.nan)
    z_tab = np.full((T, grid.n), np.nan)
    safe_sets: list[IntervalSet | None] = [None] * T

    for t in range(T - 1, -1, -1):
        v, u, z = _stage_solve_batch(config, values[t + 1], pts)
        if envelope:
            v = convex_envelope(pts, v)
        values[t] = ValueTable(grid, v)
        u_tab[t] = u
        z_tab[t] = z
        safe_sets[t] = _finite_hull(grid, v)

    policy = PolicyTable(grid, u_tab, z_tab)
    return SolveResult(tuple(values), policy, tuple(safe_sets), config, envelope)


def risk_constrained_safe_set(result: SolveResult, t: int) -> IntervalSet | None:
    """States at stage t from which all remaining risk constraints can be met,
    reported as the interval hull of finite-value grid nodes (None if empty).

    t = 0 gives the full-horizon safe set; larger t gives the time-dependent
    sets.  The hull resolves the true boundary to one grid cell.
    """
    T = result.config.horizon
    if not 0 <= t < T:
        raise IndexError(f"stage must lie in [0, {T - 1}], got {t}")
    return result.safe_sets[t]


def value_at(result: SolveResult, t: int, x: float) -> float:
    """Interpolated stage-t value at x; +inf outside the feasible region."""
    T = result.config.horizon
    if not 0 <= t <= T:
        raise IndexError(f"stage must lie in [0, {T}], got {t}")
    return float(result.values[t].interp(x))
