"""Set distance and empirical VaR/CVaR over finitely supported losses.

CVaR of a loss X at confidence alpha is computed through the extremal
representation

    CVaR_alpha(X) = min_z  z + E[(X - z)^+] / (1 - alpha),

whose minimum over z is attained at one of the sample values for a discrete
distribution.  All operations here are pure functions and safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IntervalSet, SystemModel

__all__ = [
    "LossSample",
    "set_distance",
    "value_at_risk",
    "cvar",
    "cvar_with_argmin",
    "safety_loss_cvar",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LossSample:
    """Finitely supported loss distribution: values and their probabilities."""

    losses: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        losses = np.atleast_1d(np.asarray(self.losses, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if losses.ndim != 1 or losses.size == 0:
            raise ValueError("losses must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(losses)):
            raise ValueError("losses must be finite")
        if weights.shape != losses.shape:
            raise ValueError("weights must match losses in length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {weights.sum()!r})")
        losses.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, losses) -> "LossSample":
        losses = np.atleast_1d(np.asarray(losses, dtype=float))
        return cls(losses, np.full(losses.size, 1.0 / losses.size))

    @property
    def mean(self) -> float:
        return float(self.losses @ self.weights)


def set_distance(x, interval: IntervalSet):
    """Distance from x to the interval: max(lo - x, x - hi, 0).

    Zero exactly on the interval; broadcasts over arrays.
    """
    xa = np.asarray(x, dtype=float)
    d = np.maximum(interval.lo - xa, xa - interval.hi)
    d = np.maximum(d, 0.0)
    return float(d) if d.ndim == 0 else d


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")


def _sort_rows(losses: np.ndarray, weights: np.ndarray):
    """Sort losses ascending along the last axis, weights kept aligned."""
    order = np.argsort(losses, axis=-1, kind="stable")
    ls = np.take_along_axis(losses, order, axis=-1)
    ws = np.take_along_axis(np.broadcast_to(weights, losses.shape), order, axis=-1)
    return ls, ws


def _cvar_rows(losses: np.ndarray, weights: np.ndarray, alpha: float):
    """CVaR and minimizing z per row of `losses` (last axis = support).

    Scans the extremal objective over the candidate set z in {losses}; for
    discrete distributions the minimum over all real z is attained there.
    Among tied minimizers the smallest z is returned.
    """
    ls, ws = _sort_rows(losses, weights)
    tail_w = np.cumsum(ws[..., ::-1], axis=-1)[..., ::-1]
    tail_lw = np.cumsum((ws * ls)[..., ::-1], axis=-1)[..., ::-1]
    obj = ls + (tail_lw - ls * tail_w) / (1.0 - alpha)
    k = np.argmin(obj, axis=-1)
    cvar_vals = np.take_along_axis(obj, k[..., None], axis=-1)[..., 0]
    z_vals = np.take_along_axis(ls, k[..., None], axis=-1)[..., 0]
    return cvar_vals, z_vals


def _uniform_tail_count(weights: np.ndarray, alpha: float) -> int | None:
    """Tail sample count k when CVaR reduces to the mean of the k largest losses.

    Requires equal weights and (1 - alpha) * N within 1e-9 of a positive
    integer; returns None otherwise.
    """
    n = weights.size
    if not np.all(np.abs(weights - 1.0 / n) <= 1e-12):
        return None
    k = (1.0 - alpha) * n
    kr = round(k)
    if kr >= 1 and abs(k - kr) <= 1e-9:
        return int(kr)
    return None


def _topk_mean_rows(losses: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries per row; equals CVaR for uniform weights
    with tail mass exactly k/N."""
    n = losses.shape[-1]
    if k >= n:
        return losses.mean(axis=-1)
    part = np.partition(losses, n - k, axis=-1)
    return part[..., n - k:].mean(axis=-1)


def value_at_risk(sample: LossSample, alpha: float) -> float:
    """Empirical alpha-quantile inf{x : F(x) >= alpha}; one of the sample losses."""
    _check_alpha(alpha)
    ls, ws = _sort_rows(sample.losses, sample.weights)
    cum = np.cumsum(ws)
    idx = int(np.searchsorted(cum, alpha - _WEIGHT_TOL, side="left"))
    return float(ls[min(idx, ls.size - 1)])


def cvar(sample: LossSample, alpha: float) -> float:
    """CVaR at confidence alpha via the extremal representation."""
    _check_alpha(alpha)
    c, _ = _cvar_rows(sample.losses, sample.weights, alpha)
    return float(c)


def cvar_with_argmin(sample: LossSample, alpha: float) -> tuple[float, float]:
    """CVaR plus the smallest z attaining the extremal objective's minimum."""
    _check_alpha(alpha)
    c, z = _cvar_rows(sample.losses, sample.weights, alpha)
    return float(c), float(z)


def safety_loss_cvar(model: SystemModel, interval: IntervalSet, x, u, alpha: float):
    """CVaR of the one-step safety loss dist(a*x + b*u - w, interval).

    Broadcasts over arrays of states and controls; scalar in, scalar out.
    """
    _check_alpha(alpha)
    losses = set_distance(model.successors(x, u), interval)
    c, _ = _cvar_rows(losses, model.weights, alpha)
    c = np.asarray(c)
    return float(c) if c.ndim == 0 else c
