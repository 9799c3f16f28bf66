"""Euler scheme, mollified solving, and path statistics."""

import math

import numpy as np
import pytest

from sdelab import batch
from sdelab.coefficients import (CoefficientTriple, constant_triple, point_measure,
                                 zero_measure)
from sdelab.errors import DivergedError, InputError
from sdelab.noise import refine, sample_noise
from sdelab.risk import build_refracted, default_params
from sdelab.solver import (euler_solve, level_occupation, moment_stat,
                           mollified_solve, mollify_triple, path_from_batch,
                           second_moment_bound)


def _additive_jump_triple(b=0.0, sigma=0.0, K=5.0):
    return CoefficientTriple(
        drift=lambda x: np.full_like(np.asarray(x, dtype=float), b),
        diffusion=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
        jump=lambda x, u: np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float),
        bound_K=K, sigma_lower=abs(sigma), label="additive")


def test_zero_coefficients_constant_path():
    nz = sample_noise(zero_measure(), 1.0, 0.1, seed=0)
    sol = euler_solve(constant_triple(0.0, 0.0), nz, 3.0)
    assert np.all(sol.values == 3.0)


def test_constant_drift_exact():
    nz = sample_noise(zero_measure(), 2.0, 0.25, seed=1)
    sol = euler_solve(constant_triple(1.5, 0.0), nz, -1.0)
    assert sol.values[-1] == pytest.approx(-1.0 + 1.5 * 2.0, abs=1e-12)


def test_compound_poisson_mean():
    # E X_1 = x0 + lambda * T * u for additive kernel; atom mass 2 at u=-1
    measure = point_measure([(-1.0, 2.0)])
    triple = _additive_jump_triple()
    n = 100_000
    outs = batch.run_monte_carlo(triple, measure, 1.0, 0.25, 0.0, range(n),
                                 lambda: [batch.MarginalRecorder([1.0])], chunk=20_000)
    finals = np.concatenate([c[0] for c in outs[0]])
    se = finals.std(ddof=1) / math.sqrt(n)
    assert abs(finals.mean() - (-2.0)) <= 3 * se


def test_jump_applied_to_left_limit():
    measure = point_measure([(-1.0, 3.0)])
    triple = _additive_jump_triple(b=1.0, sigma=0.5)
    nz = sample_noise(measure, 1.0, 0.05, seed=12)
    sol = euler_solve(triple, nz, 0.0)
    for j, t in enumerate(sol.jump_times):
        i = int(np.searchsorted(sol.times, t))
        assert sol.values[i] == sol.jump_left[j] + sol.jump_sizes[j]
        assert sol.jump_sizes[j] == sol.jump_marks[j]  # additive kernel


def test_shared_noise_determinism_bitwise():
    measure = point_measure([(-0.5, 1.0)])
    triple = _additive_jump_triple(b=0.3, sigma=1.0)
    nz = sample_noise(measure, 1.0, 0.05, seed=4)
    a = euler_solve(triple, nz, 0.2)
    b = euler_solve(triple, nz, 0.2)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.jump_left, b.jump_left)


def test_batch_equals_single_bitwise():
    measure = point_measure([(-0.5, 2.0)])
    triple = _additive_jump_triple(b=0.3, sigma=1.0)
    noises = [sample_noise(measure, 1.0, 0.05, seed=s) for s in range(6)]
    res = batch.solve_batch(triple, noises, 0.2, keep_values=True)
    for p, nz in enumerate(noises):
        single = euler_solve(triple, nz, 0.2)
        from_batch = path_from_batch(res, p, nz)
        assert np.array_equal(single.values, from_batch.values), p
        assert np.array_equal(single.jump_sizes, from_batch.jump_sizes), p


def test_path_reconstruction_from_increments_and_jumps():
    measure = point_measure([(-0.5, 2.0)])
    triple = _additive_jump_triple(b=0.3, sigma=1.0)
    nz = sample_noise(measure, 1.0, 0.1, seed=8)
    sol = euler_solve(triple, nz, 0.0)
    x = sol.values[0]
    jmap = {float(t): j for j, t in enumerate(sol.jump_times)}
    for i in range(sol.times.size - 1):
        dt = sol.times[i + 1] - sol.times[i]
        x = x + 0.3 * dt + 1.0 * nz.increments[i]
        j = jmap.get(float(sol.times[i + 1]))
        if j is not None:
            assert sol.jump_left[j] == x
            x = x + sol.jump_sizes[j]
        assert sol.values[i + 1] == x


def test_divergence_guard():
    tri = CoefficientTriple(
        drift=lambda x: np.asarray(x, dtype=float) ** 2,
        diffusion=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=1.0)
    nz = sample_noise(zero_measure(), 2.0, 0.5, seed=0)
    with pytest.raises(DivergedError) as err:
        euler_solve(tri, nz, 50.0)
    assert err.value.time is not None


# ---------------------------------------------------------------------------
# Mollified solving
# ---------------------------------------------------------------------------

def test_mollified_solve_matches_raw_for_smooth_triple():
    triple = constant_triple(0.0, 1.0)
    nz = sample_noise(zero_measure(), 1.0, 0.05, seed=3)
    raw = euler_solve(triple, nz, 0.0)
    for n in (1, 4, 64):
        mol = mollified_solve(triple, n, nz, 0.0)
        assert np.abs(mol.values - raw.values).max() < 1e-6


def test_mollified_step_drift_half_at_breakpoint():
    step_drift = CoefficientTriple(
        drift=lambda x: (np.asarray(x, dtype=float) >= 0).astype(float),
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        discontinuities=(0.0,), bound_K=2.0, sigma_lower=1.0)
    for n in (1, 8, 64):
        smooth = mollify_triple(step_drift, n, window=(-5, 5))
        assert float(smooth.drift(np.array([0.0]))[0]) == pytest.approx(0.5, abs=1e-6)


def test_mollification_ladder_contracts_on_refracted_model():
    # trend oracle: medians of sup|X^n - X^{4n}| over shared noise do not
    # increase as n grows
    params = default_params()
    triple = build_refracted(params)
    seeds = range(60)
    sups = {}
    span = (-8.0, 8.0)
    smooth = {n: mollify_triple(triple, n, span) for n in (4, 16, 64, 256)}
    for n in (4, 16, 64):
        vals = []
        for s in seeds:
            nz = sample_noise(params.claims, 1.0, 0.01, seed=s)
            a = batch.solve_batch(smooth[n], [nz], 0.3, keep_values=True)
            b = batch.solve_batch(smooth[4 * n], [nz], 0.3, keep_values=True)
            vals.append(float(np.abs(a.values - b.values).max()))
        sups[n] = float(np.median(vals))
    assert sups[16] <= sups[4]
    assert sups[64] <= sups[16]


# ---------------------------------------------------------------------------
# Path statistics
# ---------------------------------------------------------------------------

def test_moment_stat_deterministic_path():
    nz = sample_noise(zero_measure(), 1.0, 0.1, seed=0)
    sol = euler_solve(constant_triple(0.0, 0.0), nz, 3.0)
    est, se = moment_stat([sol], 1.0)
    assert est == 9.0 and se == 0.0


def test_brownian_second_moment_below_bound():
    # one-sided a priori bound with K = 1 at t = 1: estimate < 30
    triple = constant_triple(0.0, 1.0)
    paths = [euler_solve(triple, sample_noise(zero_measure(), 1.0, 1e-2, seed=s), 0.0)
             for s in range(400)]
    est, se = moment_stat(paths, 1.0)
    bound = second_moment_bound(0.0, 1.0, 1.0)
    assert bound == pytest.approx(30.0)
    assert est + 3 * se < bound
    # cross-check against an independent high-resolution direct simulation
    rng = np.random.default_rng(99)
    m = 2000
    sup2 = np.empty(400)
    for i in range(400):
        b = np.concatenate([[0.0], np.cumsum(rng.normal(0, math.sqrt(1 / m), m))])
        sup2[i] = (np.abs(b).max()) ** 2
    se_o = sup2.std(ddof=1) / 20.0
    assert abs(est - sup2.mean()) <= 3 * math.hypot(se, se_o)


def test_moment_stat_empty_errors():
    with pytest.raises(InputError):
        moment_stat([], 1.0)


def test_level_occupation_trivials():
    nz = sample_noise(zero_measure(), 1.0, 0.1, seed=0)
    const = euler_solve(constant_triple(0.0, 0.0), nz, 2.0)
    assert level_occupation(const, 2.0, 0.5) == pytest.approx(1.0)
    ramp = euler_solve(constant_triple(1.0, 0.0), nz, 0.0)  # X_t = t
    assert level_occupation(ramp, 10.0, 0.1) == 0.0


def test_level_occupation_scales_linearly_in_eps():
    # occupation-density heuristic: mean occupation near 0 is ~ linear in
    # eps for Brownian paths, which is what a measure-zero level set needs
    triple = constant_triple(0.0, 1.0)
    means = {}
    paths = [euler_solve(triple, sample_noise(zero_measure(), 1.0, 1e-3, seed=s), 0.0)
             for s in range(300)]
    for eps in (0.05, 0.1, 0.2):
        means[eps] = float(np.mean([level_occupation(p, 0.0, eps) for p in paths]))
    assert means[0.1] / means[0.05] == pytest.approx(2.0, rel=0.25)
    assert means[0.2] / means[0.1] == pytest.approx(2.0, rel=0.25)


def test_strong_self_convergence_smooth_model():
    # E sup |X^(h) - X^(h/4)| decreases with h for Lipschitz coefficients
    tri = CoefficientTriple(
        drift=lambda x: -0.5 * np.tanh(np.asarray(x, dtype=float)),
        diffusion=lambda x: 0.6 + 0.2 * np.sin(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=1.0, sigma_lower=0.4)
    diffs = {}
    for h in (0.1, 0.025):
        vals = []
        for s in range(40):
            coarse = sample_noise(zero_measure(), 1.0, h, seed=s)
            fine = refine(coarse, 4, seed2=s + 500)
            a = euler_solve(tri, coarse, 0.5)
            b = euler_solve(tri, fine, 0.5)
            vals.append(np.abs(a.values - b.values[::4]).max())
        diffs[h] = np.mean(vals)
    assert diffs[0.025] < diffs[0.1]


def test_csv_export_roundtrip(tmp_path):
    measure = point_measure([(-0.5, 2.0)])
    triple = _additive_jump_triple(b=0.3, sigma=1.0)
    nz = sample_noise(measure, 1.0, 0.25, seed=21)
    sol = euler_solve(triple, nz, 0.0)
    f = tmp_path / "path.csv"
    with f.open("w") as fp:
        sol.to_csv(fp)
    lines = f.read_text().strip().splitlines()
    assert lines[0] == "time,value,left_limit,jump_mark"
    assert len(lines) == sol.times.size + 1
    row0 = lines[1].split(",")
    assert float(row0[0]) == 0.0 and float(row0[1]) == 0.0
