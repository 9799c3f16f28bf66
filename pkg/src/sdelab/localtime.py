"""Semimartingale local-time estimators on numerical paths.

Two estimator routes, kept deliberately independent of each other so they
can cross-check:

* occupation: L = (1/2 eps) * sum over cells of
  1{|X_left - a| < eps} * sigma(X_left)^2 * dt.  The continuous bracket is
  taken as sigma^2 ds analytically (exact for this model class and lower
  variance than realized squared increments).

* tanaka: the discrete residual

      L = 2 [ (X_t - a)^+ - (X_0 - a)^+
              - sum_cells 1{X_left > a} (continuous increment)
              - sum_jumps 1{X_{s-} > a} (X_s - X_{s-})
              - sum_jumps 1{X_{s-} > a} (X_s - a)^-
              - sum_jumps 1{X_{s-} <= a} (X_s - a)^+ ],

  with left-point sums over cells and exact jump terms from the recorded
  left limits and marks.  Discretization can push the residual slightly
  negative; the reported value is clipped at zero with the raw value kept.

The pair statistic for two shared-noise solutions applies the tanaka
estimator to the difference path at level 0, computes the occupation
estimate of the difference's continuous bracket near 0 with per-cell
(sigma(X1) - sigma(X2))^2 weights, and sweeps levels {0, +-eps, +-2 eps}
to exhibit continuity of the mean local time in the level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .solver import PathSolution

_NEG_TOL = 1e-9


@dataclass(frozen=True)
class LocalTimeEstimate:
    level: float
    t: float
    kind: str  # "occupation" | "tanaka"
    value: float  # clipped at 0 for tanaka
    raw_value: float
    eps: float | None = None
    stderr: float | None = None

    def to_dict(self) -> dict:
        return {
            "level": self.level, "t": self.t, "kind": self.kind,
            "value": self.value, "raw_value": self.raw_value,
            "eps": self.eps, "stderr": self.stderr,
        }


def default_bandwidth(path: PathSolution) -> float:
    """max(sqrt(h), 10 * value resolution): the occupation kernel must
    dominate the one-step diffusion displacement."""
    res = 10.0 * np.finfo(float).eps * max(1.0, float(np.abs(path.values).max()))
    return max(math.sqrt(path.base_step), res)


def _clip_time(path: PathSolution, t: float) -> None:
    if t <= 0 or t > path.horizon + 1e-12:
        raise InputError(f"time {t} outside path horizon (0, {path.horizon}]")


def occupation_local_time(path: PathSolution, sigma_sq, a: float, eps: float,
                          t: float | None = None) -> LocalTimeEstimate:
    """Occupation-density estimate of the local time at level a.

    ``sigma_sq`` is either per-cell values of sigma(X_left)^2 or a callable
    sigma(x) evaluated along the left states (then squared).
    """
    if eps <= 0:
        raise InputError("bandwidth eps must be positive")
    t = path.horizon if t is None else t
    _clip_time(path, t)
    left = path.left_states()
    if callable(sigma_sq):
        w = np.asarray(sigma_sq(left), dtype=float) ** 2
    else:
        w = np.asarray(sigma_sq, dtype=float)
        if w.shape != left.shape:
            raise InputError("per-cell weights must align with path cells")
    dt = np.minimum(path.times[1:], t) - path.times[:-1]
    dt = np.maximum(dt, 0.0)
    val = float((w * dt * (np.abs(left - a) < eps)).sum() / (2.0 * eps))
    return LocalTimeEstimate(level=a, t=t, kind="occupation", value=val,
                             raw_value=val, eps=eps)


def occupation_profile(path: PathSolution, sigma_sq, levels: np.ndarray, eps: float,
                       t: float | None = None) -> np.ndarray:
    """Occupation estimates over a grid of levels (shared sort, O(n log n))."""
    t = path.horizon if t is None else t
    _clip_time(path, t)
    left = path.left_states()
    if callable(sigma_sq):
        w = np.asarray(sigma_sq(left), dtype=float) ** 2
    else:
        w = np.asarray(sigma_sq, dtype=float)
    dt = np.maximum(np.minimum(path.times[1:], t) - path.times[:-1], 0.0)
    order = np.argsort(left, kind="stable")
    xs = left[order]
    cw = np.concatenate([[0.0], np.cumsum((w * dt)[order])])
    levels = np.asarray(levels, dtype=float)
    hi = np.searchsorted(xs, levels + eps, side="left")
    lo = np.searchsorted(xs, levels - eps, side="right")
    return (cw[hi] - cw[lo]) / (2.0 * eps)


def occupation_integral(path: PathSolution, sigma_sq, f: Callable, eps: float,
                        levels: np.ndarray, t: float | None = None) -> float:
    """Trapezoid integral of the occupation profile against a test bump f."""
    prof = occupation_profile(path, sigma_sq, levels, eps, t)
    fv = np.asarray(f(np.asarray(levels, dtype=float)), dtype=float)
    return float(np.trapezoid(prof * fv, levels))


def bracket_pairing(path: PathSolution, sigma_sq, f: Callable,
                    t: float | None = None) -> float:
    """Right side of the occupation identity: sum f(X_left) sigma^2 dt."""
    t = path.horizon if t is None else t
    left = path.left_states()
    if callable(sigma_sq):
        w = np.asarray(sigma_sq(left), dtype=float) ** 2
    else:
        w = np.asarray(sigma_sq, dtype=float)
    dt = np.maximum(np.minimum(path.times[1:], t) - path.times[:-1], 0.0)
    return float((np.asarray(f(left), dtype=float) * w * dt).sum())


def tanaka_local_time(path: PathSolution, a: float, t: float | None = None) -> LocalTimeEstimate:
    """Discrete Tanaka residual estimate of the local time at level a."""
    t = path.horizon if t is None else t
    _clip_time(path, t)
    cut = int(np.searchsorted(path.times, t, side="right")) - 1
    times = path.times[:cut + 1]
    values = path.values[:cut + 1]
    x_t = values[-1]
    x_0 = values[0]

    jmask = path.jump_times <= times[-1]
    j_times = path.jump_times[jmask]
    j_left = path.jump_left[jmask]
    j_sizes = path.jump_sizes[jmask]
    j_post = j_left + j_sizes

    # continuous (pre-jump) increment per cell: remove the jump part from
    # cells that end at a jump time
    left_vals = values[:-1]
    right_vals = values[1:].copy()
    if j_times.size:
        jpos = np.searchsorted(times, j_times)
        right_vals[jpos - 1] = j_left
    int_cont = float(((left_vals > a) * (right_vals - left_vals)).sum())
    int_jump = float(((j_left > a) * j_sizes).sum())
    corr_above = float(((j_left > a) * np.maximum(a - j_post, 0.0)).sum())
    corr_below = float(((j_left <= a) * np.maximum(j_post - a, 0.0)).sum())

    raw = 2.0 * (max(x_t - a, 0.0) - max(x_0 - a, 0.0)
                 - int_cont - int_jump - corr_above - corr_below)
    return LocalTimeEstimate(level=a, t=float(times[-1]), kind="tanaka",
                             value=max(raw, 0.0), raw_value=raw)


def corridor_weighted_bracket(path: PathSolution, sigma_sq, rho: Callable,
                              eps: float, t: float | None = None) -> float:
    """Diagnostic sum 1{0 < X_left <= eps} * sigma^2 dt / rho(X_left).

    Raw statistic only; no finite-sample acceptance criterion attaches to
    it.
    """
    t = path.horizon if t is None else t
    left = path.left_states()
    if callable(sigma_sq):
        w = np.asarray(sigma_sq(left), dtype=float) ** 2
    else:
        w = np.asarray(sigma_sq, dtype=float)
    dt = np.maximum(np.minimum(path.times[1:], t) - path.times[:-1], 0.0)
    mask = (left > 0) & (left <= eps)
    vals = np.zeros_like(left)
    vals[mask] = w[mask] * dt[mask] / np.asarray(rho(left[mask]), dtype=float)
    return float(vals.sum())


# ---------------------------------------------------------------------------
# Pair statistic for shared-noise solutions
# ---------------------------------------------------------------------------

def difference_path(path1: PathSolution, path2: PathSolution) -> PathSolution:
    """The semimartingale X1 - X2 for two shared-noise solutions.

    Requires identical grids and seeds; the common driving measure makes
    the jump times coincide, so the difference jumps exactly at those times
    with size g(X1_{s-}, u) - g(X2_{s-}, u).
    """
    if path1.times.size != path2.times.size or not np.array_equal(path1.times, path2.times):
        raise InputError("paths do not share a grid")
    if path1.seed != path2.seed:
        raise InputError("paths do not share a noise seed")
    if path1.jump_times.size != path2.jump_times.size or \
            not np.array_equal(path1.jump_times, path2.jump_times):
        raise InputError("paths do not share jump times")
    return PathSolution(
        times=path1.times.copy(),
        values=path1.values - path2.values,
        jump_times=path1.jump_times.copy(),
        jump_marks=path1.jump_marks.copy(),
        jump_left=path1.jump_left - path2.jump_left,
        jump_sizes=path1.jump_sizes - path2.jump_sizes,
        base_step=path1.base_step, mollify_level=None,
        seed=path1.seed,
        coeff_id=f"{path1.coeff_id}-{path2.coeff_id}",
    )


@dataclass(frozen=True)
class LtConditionStat:
    """Vanishing-local-time statistic for a pair of shared-noise solutions."""

    tanaka_zero: LocalTimeEstimate
    occupation_zero: LocalTimeEstimate
    level_sweep: dict[float, float]  # level -> tanaka value (raw)
    eps: float

    def to_dict(self) -> dict:
        return {
            "tanaka_zero": self.tanaka_zero.to_dict(),
            "occupation_zero": self.occupation_zero.to_dict(),
            "level_sweep": {repr(k): v for k, v in self.level_sweep.items()},
            "eps": self.eps,
        }


def lt_condition_stat(path1: PathSolution, path2: PathSolution,
                      sigma: Callable[[np.ndarray], np.ndarray],
                      t: float | None = None,
                      eps: float | None = None,
                      sigma2: Callable[[np.ndarray], np.ndarray] | None = None) -> LtConditionStat:
    """Local time at 0 of the difference of two shared-noise solutions.

    Returns the tanaka estimate at level 0, the occupation estimate of the
    difference's continuous bracket near 0 (weights (sigma(X1)-sigma(X2))^2
    per cell), and tanaka values at levels {0, +-eps, +-2 eps}.  When the
    two paths solve differently smoothed equations, pass each diffusion
    (``sigma`` for path1, ``sigma2`` for path2).
    """
    diff = difference_path(path1, path2)
    t = diff.horizon if t is None else t
    if eps is None:
        eps = default_bandwidth(diff)
    if sigma2 is None:
        sigma2 = sigma
    tz = tanaka_local_time(diff, 0.0, t)
    w = (np.asarray(sigma(path1.left_states()), dtype=float)
         - np.asarray(sigma2(path2.left_states()), dtype=float)) ** 2
    oz = occupation_local_time(diff, w, 0.0, eps, t)
    sweep = {}
    for lev in (0.0, eps, -eps, 2 * eps, -2 * eps):
        sweep[float(lev)] = tanaka_local_time(diff, lev, t).raw_value
    return LtConditionStat(tanaka_zero=tz, occupation_zero=oz,
                           level_sweep=sweep, eps=eps)


def batch_mean(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error (fixed summation order)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise InputError("empty batch")
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se
