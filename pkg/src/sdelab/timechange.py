"""Quadratic-variation clock change and the thinned direct solver.

For a solution path X with diffusion sigma, the clock

    tau_t = int_0^t sigma(X_s)^2 ds        (left-point sums per cell)

is strictly increasing whenever sigma is bounded away from zero, and the
reparameterized process Xtilde_r = X at tau^{-1}(r) has unit diffusion: the
residual

    W_r = Xtilde_r - X_0 - int_0^r (b/sigma^2)(Xtilde_s) ds - (jumps so far)

must behave like a standard Brownian motion.  :func:`verify_bm` scores a
batch of such residuals on realized quadratic variation, terminal-value
normality, and increment decorrelation.

:func:`solve_timechanged` instead solves the reparameterized equation
directly: unit diffusion, drift (b/sigma^2), and a candidate jump stream of
total mass lambda/sigma_0^2 thinned by accepting a candidate (s, u, a) iff
a <= sigma(Xtilde_{s-})^{-2}.  The left limit is used inside the acceptance
test; the accepted jumps then arrive at the state-dependent rate
lambda * sigma(Xtilde)^{-2}, which is the jump intensity of the
reparameterized equation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as _stats

from . import batch as _batch
from .coefficients import CoefficientTriple
from .errors import DegenerateDiffusionError, InputError
from .noise import NoisePath
from .solver import PathSolution, path_from_batch


@dataclass(frozen=True)
class TimeChange:
    """Clock values on a source grid with piecewise-linear inversion."""

    times: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.times.setflags(write=False)
        self.tau.setflags(write=False)

    def value(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.times, self.tau)

    def inverse(self, r) -> np.ndarray:
        return np.interp(np.asarray(r, dtype=float), self.tau, self.times)


def compute_tau(path: PathSolution, sigma: Callable[[np.ndarray], np.ndarray]) -> TimeChange:
    """Cumulative left-point sums of sigma(X)^2 along the path grid."""
    svals = np.asarray(sigma(path.left_states()), dtype=float)
    if np.any(svals == 0.0):
        i = int(np.argmax(svals == 0.0))
        raise DegenerateDiffusionError(
            f"sigma vanished at t={path.times[i]:.6g}, x={path.left_states()[i]:.6g}")
    tau = np.empty(path.times.size)
    tau[0] = 0.0
    np.cumsum(svals ** 2 * path.cell_widths(), out=tau[1:])
    return TimeChange(times=path.times.copy(), tau=tau)


def time_change_path(path: PathSolution, tc: TimeChange) -> PathSolution:
    """The path on the image grid {tau(t_i)} (values carried over).

    Jump times map through tau preserving marks, left limits, and sizes.
    """
    if tc.times.size != path.times.size or not np.array_equal(tc.times, path.times):
        raise InputError("time change was computed from a different path")
    jpos = np.searchsorted(path.times, path.jump_times)
    return PathSolution(
        times=tc.tau.copy(), values=path.values.copy(),
        jump_times=tc.tau[jpos], jump_marks=path.jump_marks.copy(),
        jump_left=path.jump_left.copy(), jump_sizes=path.jump_sizes.copy(),
        base_step=path.base_step, mollify_level=path.mollify_level,
        seed=path.seed, coeff_id=path.coeff_id,
    )


def brownian_residual(path: PathSolution, triple: CoefficientTriple) -> PathSolution:
    """Subtract x0, the accumulated drift (b/sigma^2)(X) ds, and the jumps.

    The input must already be on the changed clock (unit diffusion); what
    remains should be a standard Brownian motion.
    """
    left = path.left_states()
    sv = np.asarray(triple.diffusion(left), dtype=float)
    bv = np.asarray(triple.drift(left), dtype=float)
    drift = np.empty(path.times.size)
    drift[0] = 0.0
    np.cumsum(bv / sv ** 2 * path.cell_widths(), out=drift[1:])
    jumps = np.zeros(path.times.size)
    if path.jump_times.size:
        jpos = np.searchsorted(path.times, path.jump_times)
        acc = np.zeros(path.times.size)
        np.add.at(acc, jpos, path.jump_sizes)
        jumps = np.cumsum(acc)
    w = path.values - path.values[0] - drift - jumps
    return PathSolution(
        times=path.times.copy(), values=w,
        jump_times=np.empty(0), jump_marks=np.empty(0),
        jump_left=np.empty(0), jump_sizes=np.empty(0),
        base_step=path.base_step, mollify_level=path.mollify_level,
        seed=path.seed, coeff_id=path.coeff_id,
    )


@dataclass(frozen=True)
class BmCheckReport:
    """Statistical verdict on a batch of candidate Brownian paths."""

    n_paths: int
    t: float
    qv_rel_error: float
    ks_stat: float
    ks_pvalue: float
    lag1_corr: float
    qv_tol: float
    ks_alpha: float
    verdict: str

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths, "t": self.t,
            "qv_rel_error": self.qv_rel_error,
            "ks_stat": self.ks_stat, "ks_pvalue": self.ks_pvalue,
            "lag1_corr": self.lag1_corr,
            "thresholds": {"qv_rel_error": self.qv_tol, "ks_pvalue": self.ks_alpha},
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def verify_bm(paths: Sequence[PathSolution], t: float,
              qv_tol: float = 0.05, ks_alpha: float = 0.01) -> BmCheckReport:
    """Score residual paths against Brownian behaviour on [0, t].

    Checks (i) the batch-mean realized quadratic variation against t,
    (ii) a KS test of W_t / sqrt(t) against the standard normal, and
    (iii) the pooled lag-1 increment correlation (reported, not gated).
    """
    if not paths:
        raise InputError("empty path batch")
    qvs = []
    terminals = []
    prev_inc = []
    next_inc = []
    for p in paths:
        cut = int(np.searchsorted(p.times, t, side="right"))
        dW = np.diff(p.values[:cut])
        qvs.append(float((dW ** 2).sum()))
        terminals.append(p.values[cut - 1])
        if dW.size >= 2:
            prev_inc.append(dW[:-1])
            next_inc.append(dW[1:])
    t_eff = float(paths[0].times[int(np.searchsorted(paths[0].times, t, side="right")) - 1])
    qv_rel = abs(float(np.mean(qvs)) - t_eff) / t_eff
    z = np.asarray(terminals) / math.sqrt(t_eff)
    ks_stat, ks_p = _stats.kstest(z, "norm")
    a = np.concatenate(prev_inc)
    b = np.concatenate(next_inc)
    lag1 = float(np.corrcoef(a, b)[0, 1]) if a.size > 1 else 0.0
    verdict = "pass" if (qv_rel < qv_tol and ks_p > ks_alpha) else "fail"
    return BmCheckReport(
        n_paths=len(paths), t=t_eff, qv_rel_error=qv_rel,
        ks_stat=float(ks_stat), ks_pvalue=float(ks_p), lag1_corr=lag1,
        qv_tol=qv_tol, ks_alpha=ks_alpha, verdict=verdict,
    )


def timechanged_triple(triple: CoefficientTriple) -> CoefficientTriple:
    """Unit diffusion, drift b/sigma^2, same kernel (clock-changed dynamics)."""
    def drift(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(triple.drift(x), dtype=float) / np.asarray(triple.diffusion(x), dtype=float) ** 2

    return CoefficientTriple(
        drift=drift,
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        jump=triple.jump,
        discontinuities=triple.discontinuities,
        bound_K=triple.bound_K, sigma_lower=1.0,
        label=f"{triple.label}|timechanged",
    )


def acceptance_threshold(triple: CoefficientTriple) -> Callable[[float], float]:
    """Thinning acceptance threshold a <= sigma(x_left)^{-2}."""
    def thr(x_left: float) -> float:
        s = float(np.asarray(triple.diffusion(np.asarray([x_left])))[0])
        if s == 0.0:
            raise DegenerateDiffusionError(f"sigma vanished at x={x_left:.6g}")
        return 1.0 / (s * s)

    return thr


def required_rate_scale(triple: CoefficientTriple) -> float:
    """Candidate-stream envelope 1/sigma_0^2 for the thinning construction."""
    if triple.sigma_lower <= 0:
        raise DegenerateDiffusionError(
            "time-changed solving needs a certified positive sigma lower bound")
    return 1.0 / triple.sigma_lower ** 2


def solve_timechanged(triple: CoefficientTriple, noise: NoisePath, x0: float) -> PathSolution:
    """Direct Euler solve of the clock-changed equation with thinned jumps.

    The noise must have been sampled with ``rate_scale >= 1/sigma_0^2`` so
    the candidate stream dominates every state-dependent acceptance rate.
    """
    res = solve_timechanged_batch(triple, [noise], x0, keep_values=True)
    return path_from_batch(res, 0, noise, coeff_id=triple.coeff_id())


def solve_timechanged_batch(triple: CoefficientTriple, noises: Sequence[NoisePath],
                            x0: float, recorders: Sequence[_batch.Recorder] = (),
                            keep_values: bool = False) -> _batch.BatchResult:
    need = required_rate_scale(triple)
    for nz in noises:
        if nz.jump_times.size and nz.aux_scale < need * (1.0 - 1e-12):
            raise InputError(
                f"noise sampled with aux budget {nz.aux_scale:.6g} < required {need:.6g}")
    return _batch.solve_batch(
        timechanged_triple(triple), noises, x0,
        jump_filter=acceptance_threshold(triple),
        recorders=recorders, keep_values=keep_values,
    )


def inverse_clock_values(path: PathSolution, triple: CoefficientTriple,
                         t_levels: Sequence[float]) -> np.ndarray:
    """Original-clock marginals read off a clock-changed path.

    The original clock accumulated along the changed path is
    A_r = int_0^r sigma(Xtilde_s)^{-2} ds; the level-t marginal is the
    state at the last grid point with A <= t.
    """
    left = path.left_states()
    sv = np.asarray(triple.diffusion(left), dtype=float)
    A = np.empty(path.times.size)
    A[0] = 0.0
    np.cumsum(path.cell_widths() / sv ** 2, out=A[1:])
    out = np.empty(len(t_levels))
    for j, t in enumerate(t_levels):
        i = int(np.searchsorted(A, t, side="right")) - 1
        if i < 0:
            raise InputError(f"level {t} below clock start")
        if A[-1] < t:
            raise InputError(f"changed-clock horizon too short to reach level {t}")
        out[j] = path.values[i]
    return out
