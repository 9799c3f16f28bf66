"""Condition checkers, moduli, and mollification against closed-form oracles."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from sdelab.coefficients import (CoefficientTriple, check_condition, check_modulus,
                                 constant_triple, exponential_claims, linear_modulus,
                                 log_modulus, make_check_grid, mollify, monotone_bound,
                                 piecewise_constant, point_measure, sampled_measure,
                                 zero_measure)
from sdelab.errors import ConfigError, EvaluationError, InputError
from sdelab.risk import build_refracted, default_params


def _grid(triple, lo=-5.0, hi=5.0, n=101):
    return make_check_grid(triple, lo, hi, n)


def test_refracted_conditions_pass():
    # mu1=1, mu2=2, sigma1=1, sigma2=2, g(x,u)=u, unit-mass atom at -1
    params = default_params()
    params = type(params)(mu1=1.0, mu2=2.0, p=params.p, sigma1=1.0, sigma2=2.0,
                          q=params.q, claims=point_measure([(-1.0, 1.0)]))
    triple = build_refracted(params)
    grid = _grid(triple)
    for cond in ("3a", "4a", "4b"):
        rep = check_condition(triple, params.claims, cond, grid)
        assert rep.verdict == "pass", (cond, rep.witness)


def test_constant_triple_all_conditions_pass():
    triple = constant_triple(0.0, 1.0)
    grid = _grid(triple)
    for cond in ("2a", "2b", "3a", "3b", "4a", "4b"):
        rep = check_condition(triple, zero_measure(), cond, grid)
        assert rep.verdict == "pass", cond


def test_antitone_kernel_fails_4a_with_witness():
    def g(x, u):
        x = np.asarray(x, dtype=float)
        return np.where(np.asarray(u, dtype=float) < 0, -2.0 * x, 0.0)

    triple = CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        jump=g, bound_K=10.0, sigma_lower=1.0)
    measure = point_measure([(-1.0, 1.0)])
    grid = np.array([-1.0, 0.0, 1.0])
    rep = check_condition(triple, measure, "4a", grid)
    assert rep.verdict == "fail"
    # brute-force oracle over grid pairs and the atom mark: x + g = -x is
    # decreasing, so both consecutive pairs violate (equally)
    violating = []
    for a, b in zip(grid[:-1], grid[1:]):
        if (b + g(b, -1.0)) - (a + g(a, -1.0)) < 0:
            violating.append([a, b])
    assert violating == [[-1.0, 0.0], [0.0, 1.0]]
    assert rep.witness["pair"] in violating
    assert rep.witness["mark"] == -1.0


def test_refracted_modulus_bound_passes():
    triple = build_refracted(default_params())
    rep = check_modulus(triple, monotone_bound(triple.modulus_f), _grid(triple))
    assert rep.verdict == "pass"


def test_constant_sigma_linear_modulus_passes():
    triple = constant_triple(0.0, 1.5)
    rep = check_modulus(triple, linear_modulus(), np.linspace(-2, 2, 41))
    assert rep.verdict == "pass"


def test_step_sigma_linear_modulus_fails_at_witness_pair():
    triple = CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=piecewise_constant([0.0], [0.0, 1.0]),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        discontinuities=(0.0,), bound_K=1.0)
    rep = check_modulus(triple, linear_modulus(), np.array([-0.1, 0.1]))
    assert rep.verdict == "fail"
    # oracle: |sigma(0.1)-sigma(-0.1)|^2 = 1 > rho(0.2) = 0.2
    assert rep.witness["pair"] == [-0.1, 0.1]
    assert rep.margin == pytest.approx(0.2 - 1.0)


def test_inadmissible_modulus_fails_before_evaluation():
    from sdelab.coefficients import custom_modulus
    triple = constant_triple(0.0, 1.0)
    spec = custom_modulus(lambda a: np.asarray(a) ** 2, divergence_flag=False)
    rep = check_modulus(triple, spec, np.linspace(-1, 1, 11))
    assert rep.verdict == "fail"
    assert rep.witness["reason"] == "modulus not admissible"


def test_lipschitz_sigma_scaled_linear_modulus():
    # |sigma(x)-sigma(y)|^2 <= L^2 |x-y|^2 <= L^2 * D * |x-y| on a bounded grid
    L, D = 0.3, 4.0
    triple = CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda x: 1.0 + L * np.sin(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=2.0, sigma_lower=0.7)
    rep = check_modulus(triple, linear_modulus(scale=L * L * D), np.linspace(-2, 2, 81))
    assert rep.verdict == "pass"


def test_grid_refinement_never_flips_fail_to_pass():
    triple = CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=piecewise_constant([0.0], [3.0, 1.0]),  # violates |sigma| <= K with K=2
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        discontinuities=(0.0,), bound_K=2.0, sigma_lower=1.0)
    coarse = np.linspace(-1, 1, 5)
    fine = np.linspace(-1, 1, 101)
    assert check_condition(triple, zero_measure(), "4b", coarse).verdict == "fail"
    assert check_condition(triple, zero_measure(), "4b", fine).verdict == "fail"


def test_monte_carlo_integral_crossing_gives_inconclusive():
    rng = np.random.default_rng(55)
    measure = sampled_measure(lambda g, n: g.normal(0.0, 1.0, n), mass=1.0)
    # oracle: large independent sample pins E max(|u|, u^2) for N(0,1)
    big = np.random.default_rng(77).normal(0.0, 1.0, 400_000)
    target = float(np.maximum(np.abs(big), big ** 2).mean())
    triple = CoefficientTriple(
        drift=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float),
        bound_K=target, sigma_lower=0.0)
    rep = check_condition(triple, measure, "2a", np.array([0.0]), rng=rng)
    assert rep.verdict == "inconclusive"
    assert rep.witness["stderr"] > 0


def test_empty_grid_and_nonfinite_values_error():
    triple = constant_triple(0.0, 1.0)
    with pytest.raises(InputError):
        check_condition(triple, zero_measure(), "2a", np.array([]))
    bad = CoefficientTriple(
        drift=lambda x: np.where(np.asarray(x) > 0, np.nan, 0.0),
        diffusion=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        bound_K=1.0)
    with pytest.raises(EvaluationError):
        check_condition(bad, zero_measure(), "2b", np.array([-1.0, 1.0]))


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

def test_mollify_constant_is_identity():
    m = mollify(lambda x: np.full_like(np.asarray(x, dtype=float), 2.5), 3)
    xs = np.linspace(-4, 4, 17)
    assert np.allclose(m(xs), 2.5, atol=1e-12)


def test_mollify_step_half_at_breakpoint():
    step = lambda x: (np.asarray(x, dtype=float) >= 0).astype(float)
    for n in (1, 4, 25):
        m = mollify(step, n, breakpoints=(0.0,))
        assert m(0.0) == pytest.approx(0.5, abs=1e-12)


def test_mollify_step_matches_gaussian_cdf():
    # E 1{x + xi >= 0} = Phi(x * sqrt(n)); closed-form oracle at n=4, x=0.5
    step = lambda x: (np.asarray(x, dtype=float) >= 0).astype(float)
    m = mollify(step, 4, breakpoints=(0.0,))
    assert abs(m(0.5) - norm.cdf(1.0)) < 1e-6
    xs = np.array([-1.0, -0.2, 0.3, 2.0])
    assert np.allclose(m(xs), norm.cdf(xs * 2.0), atol=1e-9)


def test_mollify_derivative_score_formula():
    step = lambda x: (np.asarray(x, dtype=float) >= 0).astype(float)
    m = mollify(step, 4, breakpoints=(0.0,))
    # d/dx Phi(2x) = 2 phi(2x)
    assert m.derivative(0.5) == pytest.approx(2.0 * norm.pdf(1.0), abs=1e-8)


def test_mollify_preserves_monotonicity_and_bounds():
    f = lambda x: np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    xs = np.linspace(-3, 3, 201)
    for bps in ((), (0.0,)):
        m = mollify(f, 9, breakpoints=bps)
        vals = m(xs)
        assert np.all(np.diff(vals) >= -1e-12)
        assert np.abs(vals).max() <= 1.0 + 1e-12


def test_mollify_rejects_low_order_and_bad_level():
    with pytest.raises(ConfigError):
        mollify(lambda x: x, 4, quadrature_order=3)
    with pytest.raises(ConfigError):
        mollify(lambda x: x, 0)


def test_exponential_claims_moments():
    # int |u| mu(du) = rate * mean for untruncated exponential magnitudes
    meas = exponential_claims(rate=2.0, mean=0.5)
    val, se = meas.integral(np.abs)
    assert val == pytest.approx(1.0, rel=1e-8)
    assert se == 0.0
    assert meas.total_mass == pytest.approx(2.0)
    # truncation drops small-mark mass and reports the first-moment proxy
    trunc = exponential_claims(rate=2.0, mean=0.5, truncation=0.1)
    assert trunc.total_mass == pytest.approx(2.0 * math.exp(-0.2))
    assert trunc.dropped_abs_moment > 0
    samples = trunc.sample_marks(np.random.default_rng(3), 1000)
    assert samples.max() <= -0.1


def test_condition_report_serializes():
    triple = constant_triple(1.0, 1.0)
    rep = check_condition(triple, zero_measure(), "2a", np.linspace(-1, 1, 11))
    d = rep.to_dict()
    assert d["condition"] == "2a"
    assert d["verdict"] == "pass"
    assert "grid" in d
