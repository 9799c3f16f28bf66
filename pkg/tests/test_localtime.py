"""Local-time estimators against closed-form and cross-estimator oracles."""

import math

import numpy as np
import pytest

from sdelab.coefficients import CoefficientTriple, constant_triple, point_measure, zero_measure
from sdelab.errors import InputError
from sdelab.localtime import (batch_mean, bracket_pairing, corridor_weighted_bracket,
                              default_bandwidth, difference_path, lt_condition_stat,
                              occupation_integral, occupation_local_time,
                              occupation_profile, tanaka_local_time)
from sdelab.noise import sample_noise
from sdelab.solver import euler_solve

BM = constant_triple(0.0, 1.0)


def _bm_paths(n, h=1e-3, seed0=0):
    return [euler_solve(BM, sample_noise(zero_measure(), 1.0, h, seed=s), 0.0)
            for s in range(seed0, seed0 + n)]


def _jump_triple(b=0.0, sigma=1.0):
    return CoefficientTriple(
        drift=lambda x: np.full_like(np.asarray(x, dtype=float), b),
        diffusion=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
        jump=lambda x, u: np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float),
        bound_K=4.0, sigma_lower=abs(sigma))


def test_zero_bracket_means_zero_occupation_local_time():
    # pure drift + jumps: continuous bracket vanishes
    tri = _jump_triple(b=1.0, sigma=0.0)
    nz = sample_noise(point_measure([(-0.5, 2.0)]), 1.0, 0.1, seed=3)
    sol = euler_solve(tri, nz, 0.0)
    est = occupation_local_time(sol, tri.diffusion, 0.0, 0.2)
    assert est.value == 0.0


def test_far_level_occupation_zero():
    sol = _bm_paths(1)[0]
    est = occupation_local_time(sol, BM.diffusion, 50.0, 0.1)
    assert est.value == 0.0


def test_brownian_occupation_matches_reflection_identity():
    # oracle: E L_1^0(B) = E|B_1| = sqrt(2/pi), E|B_1| checked by direct MC
    n = 1500
    paths = _bm_paths(n)
    vals = [occupation_local_time(p, BM.diffusion, 0.0, 0.05).value for p in paths]
    mean, se = batch_mean(vals)
    rng = np.random.default_rng(123)
    absb = np.abs(rng.normal(0.0, 1.0, 200_000))
    oracle, oracle_se = float(absb.mean()), float(absb.std(ddof=1) / math.sqrt(absb.size))
    assert oracle == pytest.approx(math.sqrt(2 / math.pi), abs=4 * oracle_se)
    # eps = 0.05 at h = 1e-3 carries a small smoothing bias; stay within
    # 3 joint stderr plus the analytic bias allowance ~ 0.44 * eps
    assert abs(mean - oracle) <= 3 * math.hypot(se, oracle_se) + 0.44 * 0.05


def test_tanaka_zero_for_continuous_finite_variation_path():
    tri = constant_triple(0.7, 0.0)
    nz = sample_noise(zero_measure(), 1.0, 0.1, seed=5)
    sol = euler_solve(tri, nz, 1.0)  # stays above 0
    est = tanaka_local_time(sol, 0.0)
    assert est.raw_value == 0.0
    crossing = euler_solve(tri, nz, -0.35)  # crosses 0 at t = 0.5
    est2 = tanaka_local_time(crossing, 0.0)
    assert abs(est2.raw_value) <= 2 * 0.7 * 0.1 + 1e-12  # one-cell slack


def test_tanaka_telescoping_above_level_with_jumps():
    tri = _jump_triple(b=0.5, sigma=1.0)
    nz = sample_noise(point_measure([(-0.3, 2.0)]), 1.0, 0.05, seed=6)
    sol = euler_solve(tri, nz, 10.0)  # far above 0, never returns
    est = tanaka_local_time(sol, 0.0)
    assert est.raw_value == pytest.approx(0.0, abs=1e-12)


def test_tanaka_agrees_with_occupation_on_brownian():
    n = 400
    paths = _bm_paths(n)
    tan = [tanaka_local_time(p, 0.0).raw_value for p in paths]
    occ = [occupation_local_time(p, BM.diffusion, 0.0, 0.05).value for p in paths]
    mt, st = batch_mean(tan)
    mo, so = batch_mean(occ)
    assert abs(mt - mo) <= 3 * math.hypot(st, so) + 0.44 * 0.05


def test_occupation_profile_matches_pointwise_estimates():
    p = _bm_paths(1)[0]
    levels = np.array([-0.3, 0.0, 0.2])
    prof = occupation_profile(p, BM.diffusion, levels, 0.05)
    for lev, v in zip(levels, prof):
        assert v == pytest.approx(
            occupation_local_time(p, BM.diffusion, float(lev), 0.05).value, abs=1e-12)


def test_occupation_identity_against_bracket_pairing():
    # |int L^a f(a) da - sum f(X) sigma^2 dt| small for a smooth bump
    p = _bm_paths(1, h=1e-3)[0]
    f = lambda a: np.exp(-0.5 * (np.asarray(a) / 0.5) ** 2)
    eps = 0.03
    levels = np.arange(-3.0, 3.0, eps / 2)
    lhs = occupation_integral(p, BM.diffusion, f, eps, levels)
    rhs = bracket_pairing(p, BM.diffusion, f)
    assert rhs > 0
    assert abs(lhs - rhs) / rhs < 0.05


def test_occupation_monotone_in_time_and_nonnegative():
    p = _bm_paths(1)[0]
    vals = [occupation_local_time(p, BM.diffusion, 0.0, 0.05, t).value
            for t in (0.25, 0.5, 1.0)]
    assert vals[0] >= 0
    assert vals[0] <= vals[1] <= vals[2]


def test_corridor_weighted_bracket_diagnostic():
    p = _bm_paths(1)[0]
    stat = corridor_weighted_bracket(p, BM.diffusion, lambda a: np.asarray(a), 0.5)
    assert stat >= 0.0
    tiny = corridor_weighted_bracket(p, BM.diffusion, lambda a: np.asarray(a), 1e-9)
    assert tiny <= stat


# ---------------------------------------------------------------------------
# Pair statistic
# ---------------------------------------------------------------------------

def test_identical_pair_gives_exact_zero():
    tri = _jump_triple()
    nz = sample_noise(point_measure([(-0.4, 2.0)]), 1.0, 0.05, seed=7)
    p1 = euler_solve(tri, nz, 0.0)
    p2 = euler_solve(tri, nz, 0.0)
    stat = lt_condition_stat(p1, p2, tri.diffusion)
    assert stat.tanaka_zero.raw_value == 0.0
    assert stat.occupation_zero.value == 0.0


def test_shifted_pair_gives_zero_local_time_at_zero():
    tri = _jump_triple()
    nz = sample_noise(point_measure([(-0.4, 2.0)]), 1.0, 0.05, seed=8)
    p1 = euler_solve(tri, nz, 1.0)
    p2 = euler_solve(tri, nz, 0.0)
    # additive kernel + same noise: difference is constant 1
    d = difference_path(p1, p2)
    assert np.allclose(d.values, 1.0, atol=1e-12)
    stat = lt_condition_stat(p1, p2, tri.diffusion)
    assert stat.tanaka_zero.raw_value == pytest.approx(0.0, abs=1e-12)
    assert stat.occupation_zero.value == 0.0


def test_grid_mismatch_rejected():
    tri = _jump_triple()
    nz1 = sample_noise(zero_measure(), 1.0, 0.1, seed=9)
    nz2 = sample_noise(zero_measure(), 1.0, 0.05, seed=9)
    with pytest.raises(InputError):
        difference_path(euler_solve(tri, nz1, 0.0), euler_solve(tri, nz2, 0.0))


def test_level_sweep_continuity_for_brownian_difference():
    # level continuity of the mean local time: the kink at the level makes
    # the bias ~ eps, so the bandwidth (= sqrt(h)) must sit inside the
    # Monte Carlo band; h = 1e-3 gives eps ~ 0.032 against ~0.1 of 3*se
    t1 = constant_triple(0.0, 1.0)
    t2 = constant_triple(0.0, 0.5)
    sweep_vals = {}
    stats = []
    for s in range(250):
        nz = sample_noise(zero_measure(), 1.0, 1e-3, seed=s)
        p1 = euler_solve(t1, nz, 0.0)
        p2 = euler_solve(t2, nz, 0.0)
        stats.append(lt_condition_stat(p1, p2, t1.diffusion, sigma2=t2.diffusion))
    eps = stats[0].eps
    for lev in (0.0, eps, -eps):
        mean, se = batch_mean([s.level_sweep[lev] for s in stats])
        sweep_vals[lev] = (mean, se)
    m0, se0 = sweep_vals[0.0]
    for lev in (eps, -eps):
        m, se = sweep_vals[lev]
        assert abs(m - m0) <= 3 * math.hypot(se, se0)
    assert m0 > 0  # the difference process has genuine local time at 0


def test_default_bandwidth_scales_with_step():
    p_coarse = _bm_paths(1, h=1e-2)[0]
    p_fine = _bm_paths(1, h=1e-4)[0]
    assert default_bandwidth(p_coarse) == pytest.approx(0.1)
    assert default_bandwidth(p_fine) == pytest.approx(0.01)
