"""Uniqueness notions as falsifiable shared-noise experiments.

Numerical experiments cannot prove uniqueness; every verdict here is
"consistent" or "violated" against the theory at the configured
resolutions, never a proof.  Two discretizations of the same equation
under shared refined noise serve as the two-solutions surrogate, since
exact solutions are not computable objects.

* pathwise: solve every (h, n) resolution on a shared refinement chain of
  one noise realization and track D = sup_t |X^(r1) - X^(r2)| across
  consecutive pairs; consistent iff the median D decreases under
  refinement and the final median clears its threshold
  (default 10 * sqrt(h_final) * K).

* weak: two independent-seed sampling pipelines targeting the same law,
  compared by two-sample KS tests of marginals at chosen times with a
  Bonferroni-corrected p-value floor.

* maximum: the pointwise maximum M = X1 v X2 of a shared-noise pair is
  scored as a candidate solution via its one-step Euler residuals, next to
  the vanishing-local-time statistic of the pair and an exact per-jump
  cancellation check: a monotone kernel (x + g(x,u) non-decreasing) makes
  "X1_{s-} > X2_{s-} implies X1_s >= X2_s" hold pathwise at every jump.

The chain "weak uniqueness + vanishing local time => pathwise uniqueness"
itself is not a finite-resolution testable statement; the lab scores each
ingredient separately and reports them side by side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as _stats

from . import batch as _batch
from .coefficients import (CoefficientTriple, IntensityMeasureSpec, check_condition,
                           check_modulus, make_check_grid, monotone_bound)
from .errors import InputError, PreconditionError, UnderpoweredError
from .localtime import lt_condition_stat
from .noise import NoisePath, refine, sample_noise
from .solver import mollify_triple, path_from_batch

_CHAIN_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    verdict: str  # "consistent" | "violated" | "inconclusive"
    statistics: dict
    witness: dict | None = None
    preconditions: dict | None = None
    config_hash: str = ""
    artifacts: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "verdict": self.verdict,
            "statistics": self.statistics,
            "witness": self.witness,
            "preconditions": self.preconditions,
            "config_hash": self.config_hash,
            "artifacts": list(self.artifacts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def certify_pathwise(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                     grid: np.ndarray) -> dict:
    """Grid certification of the pathwise-uniqueness sufficient conditions.

    Case 1 needs 3a + 3b plus an admissible modulus; case 2 needs
    3a + 4a + 4b plus a monotone bounding function.
    """
    out = {}
    for cond in ("3a", "3b", "4a", "4b"):
        out[cond] = check_condition(triple, measure, cond, grid).to_dict()
    if triple.modulus_f is not None:
        out["mod_f"] = check_modulus(triple, monotone_bound(triple.modulus_f), grid).to_dict()
    out["case2"] = all(out.get(c, {}).get("verdict") == "pass"
                       for c in ("3a", "4a", "4b")) and \
        out.get("mod_f", {}).get("verdict", "missing") == "pass"
    return out


# ---------------------------------------------------------------------------
# Shared-noise refinement chains
# ---------------------------------------------------------------------------

def _resolution_chain(measure, T, resolutions, seed) -> list[NoisePath]:
    """Noises for a decreasing-h ladder, all refinements of one realization."""
    hs = [h for h, _ in resolutions]
    if any(h2 >= h1 for h1, h2 in zip(hs[:-1], hs[1:])):
        raise InputError("resolutions must have strictly decreasing step sizes")
    noises = [sample_noise(measure, T, hs[0], seed)]
    for k, (h1, h2) in enumerate(zip(hs[:-1], hs[1:])):
        ratio = h1 / h2
        factor = int(round(ratio))
        if abs(ratio - factor) > 1e-9 or factor < 2:
            raise InputError(f"step ladder {h1} -> {h2} is not an integer refinement")
        noises.append(refine(noises[-1], factor, seed2=_CHAIN_SEED_STRIDE * seed + k))
    return noises


def _solve_level(triple, noises, x0, n_level, keep_values=True):
    if n_level is None:
        solve_triple = triple
    else:
        span = 10.0 + 4.0 * math.sqrt(max(triple.bound_K, 1.0) * noises[0].horizon)
        solve_triple = mollify_triple(triple, n_level, (x0 - span, x0 + span))
    return _batch.solve_batch(solve_triple, noises, x0, keep_values=keep_values), solve_triple


def _pair_sup_distance(res_a, res_b, factor: int) -> np.ndarray:
    """sup over common comparison points (coarse skeleton + jump events)."""
    coarse_vals = res_a.values
    fine_vals = res_b.values[:, ::factor]
    d = np.abs(coarse_vals - fine_vals).max(axis=1)
    for p in range(coarse_vals.shape[0]):
        ja, jb = res_a.jumps[p], res_b.jumps[p]
        if ja["times"].size:
            d[p] = max(
                d[p],
                float(np.abs(ja["left"] - jb["left"]).max()),
                float(np.abs((ja["left"] + ja["sizes"]) - (jb["left"] + jb["sizes"])).max()),
            )
    return d


def observed_order(hs: Sequence[float], medians: Sequence[float]) -> float:
    """Slope of log median D against log h (least squares)."""
    hs = np.asarray(hs, dtype=float)
    med = np.asarray(medians, dtype=float)
    keep = med > 0
    if keep.sum() < 2:
        return math.inf  # distances collapsed to zero: faster than any order
    return float(np.polyfit(np.log(hs[keep]), np.log(med[keep]), 1)[0])


def pathwise_experiment(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                        x0: float, resolutions: Sequence[tuple[float, int | None]],
                        seeds: Sequence[int], T: float = 1.0,
                        threshold_scale: float = 10.0,
                        check_grid: np.ndarray | None = None,
                        config_hash: str = "") -> ExperimentReport:
    """Shared-noise sup-distance ladder across (h, n) resolutions."""
    if len(resolutions) < 2:
        raise InputError("need at least two resolutions")
    if check_grid is None:
        lo = min((min(triple.discontinuities, default=x0), x0))
        hi = max((max(triple.discontinuities, default=x0), x0))
        check_grid = make_check_grid(triple, lo - 5.0, hi + 5.0)
    pre = certify_pathwise(triple, measure, check_grid)

    n_seeds = len(seeds)
    dists = [np.empty(n_seeds) for _ in resolutions[:-1]]
    factors = []
    for h1, h2 in zip([r[0] for r in resolutions[:-1]], [r[0] for r in resolutions[1:]]):
        factors.append(int(round(h1 / h2)))

    # all seeds share the skeleton per level: batch one level at a time
    chains = [_resolution_chain(measure, T, resolutions, s) for s in seeds]
    results = []
    for lev, (h, n) in enumerate(resolutions):
        noises = [chains[i][lev] for i in range(n_seeds)]
        res, _ = _solve_level(triple, noises, x0, n)
        results.append(res)
    for k in range(len(resolutions) - 1):
        dists[k][:] = _pair_sup_distance(results[k], results[k + 1], factors[k])

    medians = [float(np.median(d)) for d in dists]
    pair_stats = []
    for k, d in enumerate(dists):
        pair_stats.append({
            "h_coarse": resolutions[k][0], "h_fine": resolutions[k + 1][0],
            "n_coarse": resolutions[k][1], "n_fine": resolutions[k + 1][1],
            "median_D": medians[k], "mean_D": float(d.mean()),
            "se_D": float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0,
            "max_D": float(d.max()),
        })
    h_final = resolutions[-1][0]
    threshold = threshold_scale * math.sqrt(h_final) * triple.bound_K
    decreasing = all(m2 <= m1 for m1, m2 in zip(medians[:-1], medians[1:]))
    order = observed_order([r[0] for r in resolutions[:-1]], medians)
    consistent = decreasing and medians[-1] < threshold
    witness = None
    if not consistent:
        worst = int(np.argmax(dists[-1]))
        witness = {"seed": int(seeds[worst]), "D": float(dists[-1][worst]),
                   "medians": medians, "threshold": threshold}
    return ExperimentReport(
        experiment="pathwise", verdict="consistent" if consistent else "violated",
        statistics={"pairs": pair_stats, "medians": medians,
                    "final_threshold": threshold, "observed_order": order},
        witness=witness, preconditions=pre, config_hash=config_hash,
    )


# ---------------------------------------------------------------------------
# Weak (distributional) comparison
# ---------------------------------------------------------------------------

def weak_experiment(sampler_a: Callable, sampler_b: Callable,
                    t_list: Sequence[float], n_paths: int, seed_base: int = 0,
                    alpha: float = 0.01, config_hash: str = "") -> ExperimentReport:
    """Two-sample KS comparison of marginals from independent seed blocks.

    A sampler maps (seeds, t_list) to an array of shape
    (len(t_list), len(seeds)).  Seed blocks are disjoint by construction.
    """
    if n_paths < 100:
        raise UnderpoweredError("weak comparison needs at least 100 paths per arm")
    seeds_a = [seed_base + i for i in range(n_paths)]
    seeds_b = [seed_base + n_paths + i for i in range(n_paths)]
    xa = np.asarray(sampler_a(seeds_a, t_list), dtype=float)
    xb = np.asarray(sampler_b(seeds_b, t_list), dtype=float)
    if xa.shape != (len(t_list), n_paths) or xb.shape != (len(t_list), n_paths):
        raise InputError("sampler output shape must be (len(t_list), n_paths)")
    corrected = alpha / len(t_list)
    per_t = []
    worst = None
    for j, t in enumerate(t_list):
        ks = _stats.ks_2samp(xa[j], xb[j])
        per_t.append({"t": float(t), "ks_stat": float(ks.statistic),
                      "p_value": float(ks.pvalue)})
        if worst is None or ks.pvalue < worst["p_value"]:
            worst = per_t[-1]
    consistent = all(row["p_value"] > corrected for row in per_t)
    return ExperimentReport(
        experiment="weak", verdict="consistent" if consistent else "violated",
        statistics={"per_time": per_t, "alpha": alpha,
                    "bonferroni_alpha": corrected, "n_paths": n_paths},
        witness=None if consistent else worst, config_hash=config_hash,
    )


def direct_marginal_sampler(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                            x0: float, h: float, chunk: int = 2048) -> Callable:
    """Marginals of the plain jump-adapted Euler solution."""
    def sample(seeds, t_list):
        T = max(t_list)
        out = _batch.run_monte_carlo(
            triple, measure, T, h, x0, seeds,
            lambda: [_batch.MarginalRecorder(t_list)], chunk=chunk)
        return np.concatenate(out[0], axis=1)

    return sample


def timechanged_marginal_sampler(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                                 x0: float, h: float, clock_horizon: float,
                                 chunk: int = 2048) -> Callable:
    """Marginals via the thinned clock-changed solver plus clock inversion.

    ``clock_horizon`` must be at least max(t_list) * sup sigma^2 so the
    accumulated original clock reaches every requested level.
    """
    from .timechange import required_rate_scale, timechanged_triple, acceptance_threshold

    rate_scale = required_rate_scale(triple)
    tc_triple = timechanged_triple(triple)
    thr = acceptance_threshold(triple)

    def phi(x):
        return 1.0 / np.asarray(triple.diffusion(x), dtype=float) ** 2

    def sample(seeds, t_list):
        out = _batch.run_monte_carlo(
            tc_triple, measure, clock_horizon, h, x0, seeds,
            lambda: [_batch.ClockInversionRecorder(t_list, phi)],
            rate_scale=rate_scale, jump_filter=thr, chunk=chunk)
        return np.concatenate(out[0], axis=1)

    return sample


# ---------------------------------------------------------------------------
# Maximum of two solutions (comparison property)
# ---------------------------------------------------------------------------

def jump_cancellation_check(path1, path2) -> list[dict]:
    """Exact per-jump check: X1_{s-} > X2_{s-} implies X1_s >= X2_s.

    Returns one record per violated jump (empty list when the monotone
    kernel property holds pathwise).
    """
    if path1.jump_times.size != path2.jump_times.size or \
            not np.array_equal(path1.jump_times, path2.jump_times):
        raise InputError("paths do not share jump times")
    out = []
    post1 = path1.jump_left + path1.jump_sizes
    post2 = path2.jump_left + path2.jump_sizes
    for j in range(path1.jump_times.size):
        l1, l2 = path1.jump_left[j], path2.jump_left[j]
        p1, p2 = post1[j], post2[j]
        if (l1 > l2 and p1 < p2) or (l2 > l1 and p2 < p1):
            out.append({"time": float(path1.jump_times[j]),
                        "left": [float(l1), float(l2)],
                        "post": [float(p1), float(p2)],
                        "mark": float(path1.jump_marks[j])})
    return out


def _euler_residuals(path, triple, noise) -> tuple[float, float]:
    """One-step residuals of a candidate path against the scheme dynamics."""
    left = path.left_states()
    right = path.values[1:].copy()
    dt = path.cell_widths()
    jpos = np.searchsorted(path.times, path.jump_times) if path.jump_times.size else np.empty(0, int)
    if path.jump_times.size:
        right[jpos - 1] = path.jump_left  # continuous part of jump cells
    bv = np.asarray(triple.drift(left), dtype=float)
    sv = np.asarray(triple.diffusion(left), dtype=float)
    r = right - left - bv * dt - sv * noise.increments
    if path.jump_times.size:
        g = np.asarray(triple.jump(path.jump_left, path.jump_marks), dtype=float)
        jump_res = (path.jump_left + path.jump_sizes) - path.jump_left - g
        r = np.concatenate([r, jump_res])
    return float(np.abs(r).max()), float(np.sqrt((r ** 2).sum()))


def maximum_experiment(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                       x0: float, h: float | Sequence[float], seeds: Sequence[int],
                       n_levels: tuple[int, int] = (8, 64), T: float = 1.0,
                       enforce_precondition: bool = True,
                       check_grid: np.ndarray | None = None,
                       config_hash: str = "") -> ExperimentReport:
    """Score M = X1 v X2 of a shared-noise pair as a candidate solution.

    Per refinement level: the pair's vanishing-local-time statistic, the
    Euler residuals of M against the raw dynamics, and the exact jump
    cancellation count.  Consistent iff residual and local-time medians
    shrink from the coarse to the fine level and no cancellation violation
    occurred.
    """
    hs = [float(h)] if np.isscalar(h) else [float(v) for v in h]
    if len(hs) == 1:
        hs.append(hs[0] / 2.0)
    resolutions = [(hv, None) for hv in hs]

    if check_grid is None:
        lo = min((min(triple.discontinuities, default=x0), x0))
        hi = max((max(triple.discontinuities, default=x0), x0))
        check_grid = make_check_grid(triple, lo - 5.0, hi + 5.0)
    report_4a = check_condition(triple, measure, "4a", check_grid)
    if report_4a.verdict != "pass" and enforce_precondition:
        raise PreconditionError(
            f"monotone-kernel condition not certified: {report_4a.witness}")

    n1, n2 = n_levels
    span = 10.0 + 4.0 * math.sqrt(max(triple.bound_K, 1.0) * T)
    smooth1 = mollify_triple(triple, n1, (x0 - span, x0 + span))
    smooth2 = mollify_triple(triple, n2, (x0 - span, x0 + span))

    chains = [_resolution_chain(measure, T, resolutions, s) for s in seeds]
    level_stats = []
    violations = []
    for lev, (hv, _) in enumerate(resolutions):
        noises = [chains[i][lev] for i in range(len(seeds))]
        res1 = _batch.solve_batch(smooth1, noises, x0, keep_values=True)
        res2 = _batch.solve_batch(smooth2, noises, x0, keep_values=True)
        lt_vals = []
        r_sup = []
        r_l2 = []
        for p, nz in enumerate(noises):
            p1 = path_from_batch(res1, p, nz, mollify_level=n1, coeff_id="n1")
            p2 = path_from_batch(res2, p, nz, mollify_level=n2, coeff_id="n2")
            for v in jump_cancellation_check(p1, p2):
                violations.append({"seed": int(seeds[p]), "h": hv, **v})
            stat = lt_condition_stat(p1, p2, smooth1.diffusion, sigma2=smooth2.diffusion)
            lt_vals.append(stat.tanaka_zero.value)
            mpath = _max_path(p1, p2)
            sup, l2 = _euler_residuals(mpath, triple, nz)
            r_sup.append(sup)
            r_l2.append(l2)
        level_stats.append({
            "h": hv,
            "median_lt": float(np.median(lt_vals)),
            "median_residual_sup": float(np.median(r_sup)),
            "median_residual_l2": float(np.median(r_l2)),
        })

    shrink = all(
        level_stats[k + 1]["median_residual_sup"] <= level_stats[k]["median_residual_sup"]
        and level_stats[k + 1]["median_lt"] <= level_stats[k]["median_lt"] + 1e-12
        for k in range(len(level_stats) - 1))
    consistent = shrink and not violations
    witness = None
    if violations:
        witness = {"first_violation": violations[0], "count": len(violations)}
    elif not consistent:
        witness = {"levels": level_stats}
    return ExperimentReport(
        experiment="maximum", verdict="consistent" if consistent else "violated",
        statistics={"levels": level_stats, "n_levels": list(n_levels),
                    "jump_cancellation_violations": len(violations),
                    "condition_4a": report_4a.to_dict()},
        witness=witness,
        preconditions={"4a": report_4a.to_dict()}, config_hash=config_hash,
    )


def _max_path(p1, p2):
    """Pointwise maximum of two shared-grid paths as a candidate path."""
    from .solver import PathSolution

    left = np.maximum(p1.jump_left, p2.jump_left)
    post = np.maximum(p1.jump_left + p1.jump_sizes, p2.jump_left + p2.jump_sizes)
    return PathSolution(
        times=p1.times.copy(), values=np.maximum(p1.values, p2.values),
        jump_times=p1.jump_times.copy(), jump_marks=p1.jump_marks.copy(),
        jump_left=left, jump_sizes=post - left,
        base_step=p1.base_step, mollify_level=None, seed=p1.seed,
        coeff_id=f"max({p1.coeff_id},{p2.coeff_id})",
    )
