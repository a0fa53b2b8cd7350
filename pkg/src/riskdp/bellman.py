"""Single-stage solver for the risk-constrained Bellman recursion.

Each grid point poses a 1-D convex program: minimize the expected stage cost
plus expected interpolated cost-to-go over controls u whose one-step safety
CVaR stays below the tolerance delta.  The CVaR map u -> CVaR(dist(x', A)) is
convex, so its sublevel set within the control box is a closed interval; its
endpoints are located by bisection outward from the unconstrained CVaR
minimizer (found by golden-section search).  The remaining objective is then
minimized by golden-section search on that interval.

The auxiliary variables of the finite-support reformulation are eliminated in
closed form: the per-sample projection onto the safe interval turns the inner
set-distance minimization into `set_distance`, and the scan over candidate z
values inside the risk module handles the CVaR level variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import IntervalSet, ProblemConfig, RiskSpec, StateGrid, SystemModel
from .risk import _cvar_rows, _topk_mean_rows, _uniform_tail_count, set_distance

__all__ = [
    "ValueTable",
    "StageSolution",
    "feasible_control_interval",
    "stage_solve",
    "convex_envelope",
]

U_TOL = 1e-9
FEAS_TOL = 1e-9
MAX_ITER = 200
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Per-stage value samples on a state grid, with +inf marking infeasibility.

    Queries interpolate piecewise-linearly between finite neighbors.  Points
    strictly outside the grid, or strictly between a finite and an infinite
    node, evaluate to +inf.  A query exactly on a node returns the stored
    value.
    """

    grid: StateGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if vals.shape != self.grid.points.shape:
            raise ValueError("values must match the grid in length")
        if np.any(np.isnan(vals)) or np.any(np.isneginf(vals)):
            raise ValueError("values must be finite or +inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def finite_span(self) -> tuple[float, float] | None:
        """Hull [lo, hi] of grid nodes holding finite values; None if none."""
        idx = np.flatnonzero(np.isfinite(self.values))
        if idx.size == 0:
            return None
        pts = self.grid.points
        return float(pts[idx[0]]), float(pts[idx[-1]])

    def interp(self, x):
        """Piecewise-linear evaluation with the +inf rules above."""
        pts = self.grid.points
        vals = self.values
        xa = np.asarray(x, dtype=float)
        scalar = xa.ndim == 0
        xa = np.atleast_1d(xa)
        out = np.full(xa.shape, np.inf)
        inside = (xa >= pts[0]) & (xa <= pts[-1])
        if inside.any():
            xi = xa[inside]
            j = np.clip(np.searchsorted(pts, xi, side="right") - 1, 0, pts.size - 2)
            x0, x1 = pts[j], pts[j + 1]
            v0, v1 = vals[j], vals[j + 1]
            both = np.isfinite(v0) & np.isfinite(v1)
            dv = np.zeros_like(v0)
            np.subtract(v1, v0, out=dv, where=both)
            base = np.where(np.isfinite(v0), v0, 0.0)
            t = (xi - x0) / (x1 - x0)
            lin = np.where(both, base + t * dv, np.inf)
            out[inside] = np.where(xi == x0, v0, np.where(xi == x1, v1, lin))
        return float(out[0]) if scalar else out

    __call__ = interp


@dataclass(frozen=True)
class StageSolution:
    """Optimal value, control and CVaR level at one grid point.

    An infeasible state has value +inf and no control; a feasible one carries
    the minimizing control and the z attaining the CVaR there.
    """

    value: float
    u_star: float | None
    z_star: float | None

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


def _golden_min(f, lo: np.ndarray, hi: np.ndarray, tol: float = U_TOL,
                max_iter: int = MAX_ITER) -> np.ndarray:
    """Elementwise golden-section minimization of f over brackets [lo, hi].

    f maps an array of points to an array of objective values; +inf entries
    are allowed and steer the bracket away.  Returns the final bracket
    midpoints.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    for _ in range(max_iter):
        if not np.any(b - a > tol):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        # the shrunken side reuses its surviving interior point; only the
        # fresh point is evaluated
        probe = np.where(left, c, d)
        fp = f(probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    return (a + b) / 2.0


def _bisect_to_feasible(pred, bad: np.ndarray, good: np.ndarray,
                        tol: float = U_TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Shrink [bad, good] brackets until |bad - good| <= tol; returns the
    feasible side.  pred maps control arrays to boolean feasibility."""
    bad = np.array(bad, dtype=float)
    good = np.array(good, dtype=float)
    for _ in range(max_iter):
        if not np.any(np.abs(good - bad) > tol):
            break
        mid = 0.5 * (bad + good)
        ok = pred(mid)
        good = np.where(ok, mid, good)
        bad = np.where(ok, bad, mid)
    return good


def _make_cvar_of_u(model: SystemModel, interval: IntervalSet, alpha: float):
    """Vectorized map (states, controls) -> one-step safety CVaR per element."""
    k = _uniform_tail_count(model.weights, alpha)
    if k is not None:
        def g(xs, us):
            losses = set_distance(model.successors(xs, us), interval)
            return _topk_mean_rows(losses, k)
    else:
        def g(xs, us):
            losses = set_distance(model.successors(xs, us), interval)
            return _cvar_rows(losses, model.weights, alpha)[0]
    return g


def _feasible_interval_batch(model: SystemModel, interval: IntervalSet,
                             xs: np.ndarray, risk: RiskSpec):
    """CVaR-feasible control interval per state.

    Returns (lo, hi, ok); lo/hi are meaningful only where ok.  ok is False
    where even the CVaR-minimizing control exceeds delta + FEAS_TOL.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    g = _make_cvar_of_u(model, interval, risk.alpha)
    bound = risk.delta + FEAS_TOL
    u_lo = np.full(xs.shape, model.u_lo)
    u_hi = np.full(xs.shape, model.u_hi)

    u_star = _golden_min(lambda u: g(xs, u), u_lo, u_hi)
    ok = g(xs, u_star) <= bound

    feas = lambda u: g(xs, u) <= bound
    lo_ok = feas(u_lo)
    hi_ok = feas(u_hi)
    # bisect only on the infeasible side of each endpoint; anchor the bracket
    # at the (feasible) minimizer
    lo = np.where(lo_ok, u_lo,
                  _bisect_to_feasible(feas, u_lo, np.where(ok, u_star, u_lo)))
    hi = np.where(hi_ok, u_hi,
                  _bisect_to_feasible(feas, u_hi, np.where(ok, u_star, u_hi)))
    return lo, hi, ok


def feasible_control_interval(model: SystemModel, interval: IntervalSet,
                              x: float, risk: RiskSpec) -> tuple[float, float] | None:
    """Controls in [u_lo, u_hi] whose one-step safety CVaR is at most delta.

    The set is a closed interval by convexity of the CVaR map; endpoints are
    resolved to U_TOL.  Returns None when no control meets the tolerance.
    """
    lo, hi, ok = _feasible_interval_batch(model, interval, np.asarray([x]), risk)
    if not ok[0]:
        return None
    return float(lo[0]), float(hi[0])


def _successor_window(model: SystemModel, span: tuple[float, float] | None,
                      xs: np.ndarray):
    """Controls keeping every sample successor inside the finite span of the
    next-stage table.  Returns (lo, hi) arrays; lo > hi marks an empty window."""
    if span is None:
        return np.full(xs.shape, np.inf), np.full(xs.shape, -np.inf)
    s_lo, s_hi = span
    w_min = float(model.samples.min())
    w_max = float(model.samples.max())
    ax = model.a * xs
    if model.b > 0:
        return (s_lo - ax + w_max) / model.b, (s_hi - ax + w_min) / model.b
    if model.b < 0:
        return (s_hi - ax + w_min) / model.b, (s_lo - ax + w_max) / model.b
    inside = (ax - w_max >= s_lo) & (ax - w_min <= s_hi)
    lo = np.where(inside, -np.inf, np.inf)
    hi = np.where(inside, np.inf, -np.inf)
    return lo, hi


def _stage_solve_batch(config: ProblemConfig, v_next: ValueTable, xs: np.ndarray):
    """Solve the per-state program at every state in xs.

    Returns (values, u_stars, z_stars); u/z are nan at infeasible states.
    """
    model, cost, interval, risk = (config.model, config.cost,
                                   config.safe_set, config.risk)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    weights = model.weights
    samples = model.samples

    lo_c, hi_c, ok = _feasible_interval_batch(model, interval, xs, risk)
    lo_w, hi_w = _successor_window(model, v_next.finite_span(), xs)
    lo = np.maximum(lo_c, lo_w)
    hi = np.minimum(hi_c, hi_w)
    ok = ok & (lo <= hi)

    def objective(us):
        r = np.asarray(cost.stage_cost(xs[:, None], us[:, None], samples[None, :]),
                       dtype=float)
        stage = np.broadcast_to(r, (xs.size, samples.size)) @ weights
        succ = v_next.interp(model.successors(xs, us))
        dead = np.isinf(succ).any(axis=-1)
        cont = np.where(np.isinf(succ), 0.0, succ) @ weights
        return stage + np.where(dead, np.inf, cont)

    # run golden-section on a safe dummy bracket where infeasible
    g_lo = np.where(ok, lo, model.u_lo)
    g_hi = np.where(ok, hi, model.u_lo)
    u_mid = _golden_min(objective, g_lo, g_hi)

    cand = np.stack([g_lo, u_mid, g_hi])
    f_cand = np.stack([objective(c) for c in cand])
    best = np.argmin(f_cand, axis=0)
    u_star = np.take_along_axis(cand, best[None, :], axis=0)[0]
    value = np.take_along_axis(f_cand, best[None, :], axis=0)[0]

    ok = ok & np.isfinite(value)
    value = np.where(ok, value, np.inf)
    losses = set_distance(model.successors(xs, u_star), interval)
    _, z_star = _cvar_rows(losses, weights, risk.alpha)
    u_star = np.where(ok, u_star, np.nan)
    z_star = np.where(ok, z_star, np.nan)
    return value, u_star, z_star


def stage_solve(config: ProblemConfig, v_next: ValueTable, x: float) -> StageSolution:
    """One-state Bellman step: constrained minimization of expected stage cost
    plus expected cost-to-go.

    Any control sending some sample successor into a +inf region of `v_next`
    is excluded.  Returns an infeasible solution (value +inf) when no control
    satisfies the CVaR constraint or every admissible one hits +inf.
    """
    value, u_star, z_star = _stage_solve_batch(config, v_next, np.asarray([x]))
    if not math.isfinite(value[0]):
        return StageSolution(math.inf, None, None)
    return StageSolution(float(value[0]), float(u_star[0]), float(z_star[0]))


def convex_envelope(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Lower convex hull of the finite values over their grid points.

    The finite entries must form one contiguous block (the feasible set of a
    scalar affine stage is an interval); a gap raises ValueError rather than
    being bridged.  +inf entries pass through unchanged.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size == 0:
        return values.copy()
    i0, i1 = finite[0], finite[-1]
    if finite.size != i1 - i0 + 1:
        raise ValueError("finite region is not contiguous")
    xs = points[i0:i1 + 1]
    ys = values[i0:i1 + 1]

    hull_x: list[float] = []
    hull_y: list[float] = []
    for x, y in zip(xs, ys):
        while len(hull_x) >= 2:
            cross = ((hull_x[-1] - hull_x[-2]) * (y - hull_y[-2])
                     - (hull_y[-1] - hull_y[-2]) * (x - hull_x[-2]))
            if cross <= 0:
                hull_x.pop()
                hull_y.pop()
            else:
                break
        hull_x.append(float(x))
        hull_y.append(float(y))

    out = values.copy()
    out[i0:i1 + 1] = np.interp(xs, hull_x, hull_y)
    return out
