"""Core problem data: intervals, dynamics, risk parameters, costs, state grids.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "IntervalSet",
    "SystemModel",
    "RiskSpec",
    "CostSpec",
    "StateGrid",
    "ProblemConfig",
    "dilate",
    "erode",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class IntervalSet:
    """Closed bounded interval [lo, hi] of scalar states."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval bounds must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval: lo={self.lo} > hi={self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x):
        """Membership test; broadcasts over arrays."""
        xa = np.asarray(x)
        return (xa >= self.lo) & (xa <= self.hi)


def dilate(interval: IntervalSet, delta: float) -> IntervalSet:
    """Grow an interval by delta on both sides.

    Equals {x : dist(x, interval) <= delta} for scalar intervals.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return IntervalSet(interval.lo - delta, interval.hi + delta)


def erode(interval: IntervalSet, delta: float) -> IntervalSet | None:
    """Shrink an interval by delta on both sides; None when nothing remains.

    Equals {x : dist(x, complement) >= delta} for scalar intervals.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lo, hi = interval.lo + delta, interval.hi - delta
    if lo > hi:
        return None
    return IntervalSet(lo, hi)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Scalar affine dynamics x' = a*x + b*u - w with a finite disturbance support.

    `samples` are the disturbance values w^(i) and `weights` their probabilities.
    Controls are restricted to the interval [u_lo, u_hi].
    """

    a: float
    b: float
    samples: np.ndarray
    weights: np.ndarray
    u_lo: float
    u_hi: float

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if weights.shape != samples.shape:
            raise ValueError("weights must match samples in length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")
        if self.u_lo > self.u_hi:
            raise ValueError("u_lo must not exceed u_hi")
        samples.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, a, b, samples, u_lo, u_hi) -> "SystemModel":
        """Model with equally likely disturbance samples."""
        samples = np.atleast_1d(np.asarray(samples, dtype=float))
        w = np.full(samples.size, 1.0 / samples.size)
        return cls(a, b, samples, w, u_lo, u_hi)

    @property
    def n_samples(self) -> int:
        return self.samples.size

    def step(self, x, u, w):
        """Next state a*x + b*u - w; broadcasts over arrays."""
        return self.a * np.asarray(x, dtype=float) + self.b * np.asarray(u, dtype=float) - w

    def successors(self, x, u) -> np.ndarray:
        """All sample successors of (x, u); shape (..., n_samples)."""
        base = self.a * np.asarray(x, dtype=float) + self.b * np.asarray(u, dtype=float)
        return np.asarray(base)[..., None] - self.samples


@dataclass(frozen=True)
class RiskSpec:
    """Confidence level alpha in (0,1) and risk tolerance delta >= 0."""

    alpha: float
    delta: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha}")
        if not (self.delta >= 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and nonnegative, got {self.delta}")


@dataclass(frozen=True)
class CostSpec:
    """Stage cost r(x, u, w) and terminal cost q(x).

    Both callables must return finite values for finite arguments and must
    broadcast over numpy arrays.  `convex` declares joint convexity of r in
    (x, u) for each w and of q in x; it selects the default for convex-envelope
    enforcement during backward induction.  Convexity is not verified at
    construction.
    """

    stage_cost: Callable[..., float]
    terminal_cost: Callable[..., float]
    convex: bool = True


@dataclass(frozen=True, eq=False)
class StateGrid:
    """Strictly increasing 1-D grid of state samples."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def regular(cls, lo: float, hi: float, step: float) -> "StateGrid":
        """Uniform grid from lo to hi inclusive; (hi-lo) must be a multiple of step."""
        if step <= 0:
            raise ValueError("step must be positive")
        n = (hi - lo) / step
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("hi must equal lo + k*step for an integer k >= 1")
        return cls(np.linspace(lo, hi, int(round(n)) + 1))

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def cell_width(self) -> float:
        """Largest spacing between adjacent nodes; boundary resolution bound."""
        return float(np.max(np.diff(self.points)))


@dataclass(frozen=True)
class ProblemConfig:
    """Complete finite-horizon problem instance.

    `horizon` is the number of decision stages T; controls are chosen at
    t = 0, ..., T-1 and the terminal cost applies at t = T.
    """

    model: SystemModel
    cost: CostSpec
    safe_set: IntervalSet
    risk: RiskSpec
    horizon: int
    grid: StateGrid

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be an integer >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
