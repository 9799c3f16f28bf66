"""Simulation and empirical verification for 1-d jump-diffusion SDEs with
discontinuous coefficients: jump-adapted Euler solving, clock changes,
local-time estimation, and shared-noise uniqueness experiments."""

__version__ = "0.1.0"

from .coefficients import (CoefficientTriple, ConditionReport, IntensityMeasureSpec,
                           ModulusSpec, check_condition, check_modulus,
                           exponential_claims, linear_modulus, log_modulus,
                           make_check_grid, mollify, monotone_bound,
                           piecewise_constant, piecewise_linear, point_measure,
                           zero_measure)
from .noise import NoisePath, load_noise, refine, replay_slice, sample_noise, save_noise
from .solver import (PathSolution, euler_solve, level_occupation, moment_stat,
                     mollified_solve, mollify_triple, second_moment_bound)
from .timechange import (TimeChange, brownian_residual, compute_tau,
                         solve_timechanged, time_change_path, verify_bm)
from .localtime import (LocalTimeEstimate, LtConditionStat, lt_condition_stat,
                        occupation_local_time, tanaka_local_time)
from .uniqueness import (ExperimentReport, jump_cancellation_check,
                         maximum_experiment, pathwise_experiment, weak_experiment)
from .risk import RefractedParams, build_refracted, dividend_stat, ruin_probability
