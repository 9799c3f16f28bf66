"""Coefficient triples (b, sigma, g), their admissibility checks, and mollification.

A model is a triple of bounded Borel functions

    drift b : R -> R,   diffusion sigma : R -> R,   jump kernel g : R x U -> R,

with at most finitely many declared discontinuity points inside the
simulation window, driven by a jump intensity measure mu on the mark space
U (modelled here as the real line).  The checkers verify, on a supplied
grid, the sufficient inequalities used by the solver and the uniqueness
experiments:

    2a:  b(x)^2 + sigma(x)^2 + int (|g(x,u)| v g(x,u)^2) mu(du) <= K
    2b:  |sigma(x)| >= sigma_0 > 0
    3a:  |b(x)| + int |g(x,u)| mu(du) <= K sigma(x)^2
    3b:  0 < |sigma(x)| <= K
    4a:  x + g(x,u) non-decreasing in x, for each mark u
    4b:  0 < sigma_0 <= |sigma(x)| <= K
    mod_rho:  |sigma(x)-sigma(y)|^2 <= rho(|x-y|) on grid pairs
    mod_f:    |sigma(x)-sigma(y)|^2 <= |f(x)-f(y)| on grid pairs,
              f non-decreasing and bounded on the grid

Grid verdicts are local by design: a report never claims anything off its
grid.  Mollification replaces a coefficient f by x -> E f(x + xi_n) with
xi_n centred Gaussian of variance 1/n; declared breakpoints are honoured
by piecewise quadrature so the smoothed values are accurate to near
machine precision even for step functions.

All evaluable callables are expected to be numpy-vectorized over x.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import ConfigError, EvaluationError, InputError, MeasureError, ParameterError

CONDITION_IDS = ("2a", "2b", "3a", "3b", "4a", "4b")
MODULUS_IDS = ("mod_rho", "mod_f")

_REL_TOL = 1e-9  # slack for <=/>= comparisons on the grid


# ---------------------------------------------------------------------------
# Jump intensity measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntensityMeasureSpec:
    """Description of the mark measure mu on U = R.

    The measure decomposes into finitely many atoms plus an absolutely
    continuous part.  The AC part is described either by an unnormalized
    density (integrals are then computed by adaptive quadrature) or only by
    a sampler (integrals fall back to Monte Carlo with a reported standard
    error).  ``truncation`` is the small-mark cutoff eta: marks with
    |u| < eta are dropped, and ``dropped_abs_moment`` reports
    int_{|u|<eta} |u| mu(du) as the truncation-error proxy.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    density: Callable[[np.ndarray], np.ndarray] | None = None
    density_mass: float = 0.0
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    support: tuple[float, float] = (-math.inf, math.inf)
    truncation: float = 0.0
    dropped_abs_moment: float = 0.0
    label: str = "custom"

    def __post_init__(self):
        for loc, mass in self.atoms:
            if mass < 0:
                raise MeasureError(f"atom at {loc} has negative mass {mass}")
            if not (self.support[0] <= loc <= self.support[1]):
                raise MeasureError(f"atom at {loc} lies outside support {self.support}")
        if self.density_mass < 0:
            raise MeasureError("density_mass must be nonnegative")
        if self.density_mass > 0 and self.sampler is None:
            raise MeasureError("an absolutely continuous part needs a sampler")

    @property
    def total_mass(self) -> float:
        """Truncated total mass lambda(eta)."""
        return sum(m for _, m in self.atoms) + self.density_mass

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n marks from the normalized truncated measure."""
        lam = self.total_mass
        if not math.isfinite(lam) or lam <= 0:
            raise MeasureError(f"cannot sample marks: total mass {lam}")
        weights = [m for _, m in self.atoms] + ([self.density_mass] if self.density_mass > 0 else [])
        comp = rng.choice(len(weights), size=n, p=np.asarray(weights) / lam)
        out = np.empty(n)
        for i, (loc, _) in enumerate(self.atoms):
            out[comp == i] = loc
        if self.density_mass > 0:
            idx = comp == len(self.atoms)
            k = int(idx.sum())
            if k:
                out[idx] = self.sampler(rng, k)
        return out

    def integral(self, integrand: Callable[[np.ndarray], np.ndarray],
                 rng: np.random.Generator | None = None,
                 n_mc: int = 4096) -> tuple[float, float]:
        """int integrand(u) mu(du) over the truncated measure.

        Returns (value, standard_error).  Atoms are summed exactly; the AC
        part uses adaptive quadrature against the density when available,
        otherwise Monte Carlo through the sampler (stderr > 0 then).
        """
        total = 0.0
        for loc, mass in self.atoms:
            total += mass * float(np.asarray(integrand(np.asarray([loc])))[0])
        stderr = 0.0
        if self.density_mass > 0:
            if self.density is not None:
                total += self._quad_ac(integrand)
            else:
                if rng is None:
                    rng = np.random.default_rng(0)
                vals = np.asarray(integrand(np.asarray(self.sampler(rng, n_mc))), dtype=float)
                total += self.density_mass * float(vals.mean())
                stderr = self.density_mass * float(vals.std(ddof=1)) / math.sqrt(n_mc)
        return total, stderr

    def _quad_ac(self, integrand) -> float:
        lo, hi = self.support
        eta = self.truncation
        fn = lambda u: float(np.asarray(integrand(np.asarray([u])))[0] * self.density(np.asarray([u]))[0])
        total = 0.0
        # truncation removes (-eta, eta); integrate the remaining pieces
        if lo < -eta:
            total += quad(fn, lo, min(-eta, hi), limit=200)[0]
        if hi > eta:
            total += quad(fn, max(eta, lo), hi, limit=200)[0]
        return total

    def descriptor(self) -> dict:
        return {
            "label": self.label,
            "atoms": [[float(a), float(m)] for a, m in self.atoms],
            "density_mass": float(self.density_mass),
            "support": [float(self.support[0]), float(self.support[1])],
            "truncation": float(self.truncation),
            "dropped_abs_moment": float(self.dropped_abs_moment),
        }

    def spec_hash(self) -> str:
        payload = json.dumps(self.descriptor(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def zero_measure() -> IntensityMeasureSpec:
    """Measure with no jumps at all."""
    return IntensityMeasureSpec(label="zero")


def point_measure(atoms: Sequence[tuple[float, float]], label: str = "atoms") -> IntensityMeasureSpec:
    """Purely atomic measure from (location, mass) pairs."""
    locs = [float(a) for a, _ in atoms]
    support = (min(locs), max(locs)) if locs else (0.0, 0.0)
    return IntensityMeasureSpec(atoms=tuple((float(a), float(m)) for a, m in atoms),
                                support=support, label=label)


def exponential_claims(rate: float, mean: float, truncation: float = 0.0) -> IntensityMeasureSpec:
    """Spectrally negative claim measure rate * Exp(mean) magnitudes on u < 0.

    mu(du) = rate * (1/mean) * exp(u/mean) du on u < 0.  With a cutoff
    eta > 0 the surviving mass is rate*exp(-eta/mean) and the (memoryless)
    truncated sampler is u = -(eta + Exp(mean)).
    """
    if rate < 0 or mean <= 0:
        raise MeasureError("exponential claims need rate >= 0 and mean > 0")
    eta = float(truncation)
    mass = rate * math.exp(-eta / mean)
    # int_{-eta}^{0} |u| mu(du) = rate*(mean - (mean+eta)exp(-eta/mean))
    dropped = rate * (mean - (mean + eta) * math.exp(-eta / mean))

    def density(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.where(u < 0, rate / mean * np.exp(u / mean), 0.0)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        return -(eta + rng.exponential(mean, size=n))

    return IntensityMeasureSpec(
        density=density, density_mass=mass, sampler=sampler,
        support=(-math.inf, 0.0), truncation=eta, dropped_abs_moment=dropped,
        label=f"exp_claims(rate={rate},mean={mean},eta={eta})",
    )


def sampled_measure(sampler: Callable[[np.random.Generator, int], np.ndarray],
                    mass: float, label: str = "sampled") -> IntensityMeasureSpec:
    """AC measure known only through a sampler; integrals become Monte Carlo."""
    return IntensityMeasureSpec(density=None, density_mass=float(mass),
                                sampler=sampler, label=label)


# ---------------------------------------------------------------------------
# Coefficient triples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientTriple:
    """The functions (b, sigma, g) with their declared structure.

    ``discontinuities`` lists the breakpoints inside the simulation window
    (right-continuous evaluation there); ``bound_K`` and ``sigma_lower``
    are the constants the grid checkers certify against.  ``modulus_f``
    optionally carries a non-decreasing bounding function for the mod_f
    check.  Instances are immutable and safe to share across workers.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    jump: Callable[[np.ndarray, np.ndarray], np.ndarray]
    discontinuities: tuple[float, ...] = ()
    bound_K: float = 1.0
    sigma_lower: float = 0.0
    modulus_f: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "custom"

    def __post_init__(self):
        disc = tuple(sorted(float(d) for d in self.discontinuities))
        object.__setattr__(self, "discontinuities", disc)
        if self.bound_K < 0 or self.sigma_lower < 0:
            raise ParameterError("bound_K and sigma_lower must be nonnegative")

    def coeff_id(self) -> str:
        payload = f"{self.label}|{self.discontinuities}|{self.bound_K}|{self.sigma_lower}"
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def constant_triple(b: float, sigma: float, label: str = "constant") -> CoefficientTriple:
    """Triple with constant drift/diffusion and no jump action (g = 0)."""
    bound = max(b * b + sigma * sigma, 1.0)
    return CoefficientTriple(
        drift=lambda x: np.full_like(np.asarray(x, dtype=float), b),
        diffusion=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
        jump=lambda x, u: np.zeros_like(np.asarray(x, dtype=float)),
        discontinuities=(), bound_K=bound, sigma_lower=abs(sigma), label=label,
    )


def piecewise_constant(breaks: Sequence[float], values: Sequence[float]) -> Callable:
    """Right-continuous step function: values[i] on [breaks[i-1], breaks[i])."""
    breaks = np.asarray(breaks, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) != len(breaks) + 1:
        raise InputError("piecewise_constant needs len(values) == len(breaks)+1")

    def fn(x):
        x = np.asarray(x, dtype=float)
        return values[np.searchsorted(breaks, x, side="right")]

    return fn


def piecewise_linear(xs: Sequence[float], ys: Sequence[float]) -> Callable:
    """Continuous interpolant through the table, constant extrapolation."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys) or len(xs) < 2:
        raise InputError("piecewise_linear needs two tables of equal length >= 2")

    def fn(x):
        return np.interp(np.asarray(x, dtype=float), xs, ys)

    return fn


# ---------------------------------------------------------------------------
# Modulus specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModulusSpec:
    """A candidate continuity modulus rho, or a monotone bounding function f.

    ``divergence_flag`` records the analytic property int_0+ da/rho(a) =
    infinity for the chosen family; it is stored, never computed, because a
    numerical divergence test at 0+ is ill-posed.
    """

    kind: str  # "power" | "log" | "custom" | "monotone_bound"
    divergence_flag: bool = False
    rho: Callable[[np.ndarray], np.ndarray] | None = None
    f: Callable[[np.ndarray], np.ndarray] | None = None


def linear_modulus(scale: float = 1.0) -> ModulusSpec:
    """rho(a) = scale * a; int da/rho diverges at 0+."""
    if scale <= 0:
        raise InputError("scale must be positive")
    return ModulusSpec(kind="power", divergence_flag=True,
                       rho=lambda a: scale * np.asarray(a, dtype=float))


def log_modulus() -> ModulusSpec:
    """rho(a) = a*log(1/a) for small a (extended linearly past 1/e); divergent."""

    def rho(a):
        a = np.asarray(a, dtype=float)
        small = np.minimum(a, 1.0 / math.e)
        return np.where(a > 0, np.maximum(small * np.log(1.0 / np.maximum(small, 1e-300)), a / math.e), 0.0)

    return ModulusSpec(kind="log", divergence_flag=True, rho=rho)


def custom_modulus(rho: Callable, divergence_flag: bool) -> ModulusSpec:
    return ModulusSpec(kind="custom", divergence_flag=divergence_flag, rho=rho)


def monotone_bound(f: Callable) -> ModulusSpec:
    """Candidate non-decreasing bounded f for the squared-increment bound."""
    return ModulusSpec(kind="monotone_bound", f=f)


# ---------------------------------------------------------------------------
# Condition reports and checkers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    condition: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    witness: dict | None
    grid: dict
    margin: float = math.nan  # smallest slack seen (negative => violated)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "witness": self.witness,
            "grid": self.grid,
            "margin": None if math.isnan(self.margin) else self.margin,
        }


def make_check_grid(triple: CoefficientTriple, lo: float, hi: float, n: int = 201) -> np.ndarray:
    """Uniform grid on [lo, hi] augmented with the triple's breakpoints and
    the midpoints between consecutive breakpoints."""
    if n < 2 or hi <= lo:
        raise InputError("need hi > lo and n >= 2")
    pts = [np.linspace(lo, hi, n)]
    disc = [d for d in triple.discontinuities if lo <= d <= hi]
    if disc:
        pts.append(np.asarray(disc))
        if len(disc) > 1:
            mids = 0.5 * (np.asarray(disc[:-1]) + np.asarray(disc[1:]))
            pts.append(mids)
    return np.unique(np.concatenate(pts))


def _augment_grid(triple: CoefficientTriple, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InputError("empty check grid")
    lo, hi = grid.min(), grid.max()
    extra = [d for d in triple.discontinuities if lo <= d <= hi]
    disc = list(triple.discontinuities)
    extra += [0.5 * (a + b) for a, b in zip(disc[:-1], disc[1:]) if lo <= 0.5 * (a + b) <= hi]
    if extra:
        grid = np.unique(np.concatenate([grid, np.asarray(extra)]))
    else:
        grid = np.unique(grid)
    return grid


def _eval_checked(fn, x: np.ndarray, what: str) -> np.ndarray:
    vals = np.asarray(fn(x), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        pt = float(np.asarray(x)[bad][0]) if np.asarray(x).shape == vals.shape else None
        raise EvaluationError(f"{what} returned a non-finite value at x={pt}", point=pt)
    return vals


def _grid_descriptor(grid: np.ndarray) -> dict:
    return {"lo": float(grid.min()), "hi": float(grid.max()), "points": int(grid.size)}


def check_condition(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                    condition: str, grid: np.ndarray,
                    rng: np.random.Generator | None = None,
                    n_mark_samples: int = 64) -> ConditionReport:
    """Verify one admissibility inequality on a grid.

    The supplied grid is augmented with the triple's declared breakpoints
    and their midpoints (a refinement, so it can only make the check
    stricter).  Mark-space integrals sum atoms exactly and use quadrature
    or Monte Carlo for the continuous part; when the Monte Carlo error bar
    crosses the inequality the verdict is "inconclusive".
    """
    if condition not in CONDITION_IDS:
        raise InputError(f"unknown condition id {condition!r}")
    grid = _augment_grid(triple, grid)
    K = triple.bound_K
    s0 = triple.sigma_lower
    if rng is None:
        rng = np.random.default_rng(2861)

    if condition == "4a":
        return _check_monotone_jump(triple, measure, grid, rng, n_mark_samples)

    bvals = _eval_checked(triple.drift, grid, "drift")
    svals = _eval_checked(triple.diffusion, grid, "diffusion")

    if condition in ("2a", "3a"):
        lhs = np.empty_like(grid)
        err = np.zeros_like(grid)
        for i, x in enumerate(grid):
            if condition == "2a":
                integrand = lambda u, _x=x: np.maximum(
                    np.abs(_jump_at(triple, _x, u)), _jump_at(triple, _x, u) ** 2)
            else:
                integrand = lambda u, _x=x: np.abs(_jump_at(triple, _x, u))
            val, se = measure.integral(integrand, rng=rng)
            if not math.isfinite(val):
                raise EvaluationError(f"mark integral non-finite at x={x}", point=float(x))
            err[i] = se
            lhs[i] = val
        if condition == "2a":
            lhs = bvals ** 2 + svals ** 2 + lhs
            rhs = np.full_like(grid, K)
        else:
            lhs = np.abs(bvals) + lhs
            rhs = K * svals ** 2
        return _verdict_from_margins(condition, grid, rhs - lhs, err)

    if condition == "2b":
        if s0 <= 0:
            return ConditionReport(condition, "fail",
                                   {"reason": "sigma_lower not positive", "sigma_lower": s0},
                                   _grid_descriptor(grid), margin=-1.0)
        margins = np.abs(svals) - s0
        return _verdict_from_margins(condition, grid, margins, np.zeros_like(grid))

    if condition == "3b":
        strict = np.abs(svals) > 0
        margins = np.where(strict, np.minimum(np.abs(svals), K - np.abs(svals)), -1.0)
        return _verdict_from_margins(condition, grid, margins, np.zeros_like(grid))

    if condition == "4b":
        if s0 <= 0:
            return ConditionReport(condition, "fail",
                                   {"reason": "sigma_lower not positive", "sigma_lower": s0},
                                   _grid_descriptor(grid), margin=-1.0)
        margins = np.minimum(np.abs(svals) - s0, K - np.abs(svals))
        return _verdict_from_margins(condition, grid, margins, np.zeros_like(grid))

    raise InputError(f"unhandled condition {condition}")  # pragma: no cover


def _jump_at(triple: CoefficientTriple, x: float, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.asarray(triple.jump(np.full_like(u, x), u), dtype=float)


def _verdict_from_margins(condition, grid, margins, stderr) -> ConditionReport:
    scale = 1.0 + np.abs(margins)
    tol = _REL_TOL * scale
    idx = int(np.argmin(margins + 0.0))
    worst = float(margins[idx])
    witness = {"x": float(grid[idx]), "margin": worst}
    band = 3.0 * stderr[idx] if np.any(stderr > 0) else 0.0
    if worst + tol[idx] < -band:
        return ConditionReport(condition, "fail", witness, _grid_descriptor(grid), margin=worst)
    if np.any(stderr > 0):
        crossing = np.abs(margins) <= 3.0 * stderr
        if crossing.any():
            j = int(np.argmax(crossing))
            return ConditionReport(condition, "inconclusive",
                                   {"x": float(grid[j]), "margin": float(margins[j]),
                                    "stderr": float(stderr[j])},
                                   _grid_descriptor(grid), margin=worst)
    return ConditionReport(condition, "pass", witness, _grid_descriptor(grid), margin=worst)


def _check_monotone_jump(triple, measure, grid, rng, n_mark_samples) -> ConditionReport:
    """x + g(x,u) non-decreasing in x, over consecutive grid pairs and a
    finite mark sample (all atoms plus draws from the continuous part)."""
    marks = [loc for loc, mass in measure.atoms if mass > 0]
    if measure.density_mass > 0:
        marks.extend(np.asarray(measure.sampler(rng, n_mark_samples)).tolist())
    if not marks:
        return ConditionReport("4a", "pass", None, _grid_descriptor(grid), margin=math.inf)
    worst = math.inf
    witness = None
    for u in marks:
        gx = _eval_checked(
            lambda x, _u=float(u): triple.jump(np.asarray(x, dtype=float),
                                               np.full_like(np.asarray(x, dtype=float), _u)),
            grid, "jump")
        vals = grid + gx
        diffs = np.diff(vals)
        idx = int(np.argmin(diffs))
        if diffs[idx] < worst:
            worst = float(diffs[idx])
            witness = {"pair": [float(grid[idx]), float(grid[idx + 1])], "mark": float(u),
                       "decrease": float(diffs[idx])}
    tol = _REL_TOL * (1.0 + abs(worst))
    if worst < -tol:
        return ConditionReport("4a", "fail", witness, _grid_descriptor(grid), margin=worst)
    return ConditionReport("4a", "pass", witness, _grid_descriptor(grid), margin=worst)


def check_modulus(triple: CoefficientTriple, spec: ModulusSpec, grid: np.ndarray) -> ConditionReport:
    """Squared-increment bound of sigma against a modulus or a monotone f.

    mod_rho requires an admissible (divergent) modulus, and checks
    |sigma(x)-sigma(y)|^2 <= rho(|x-y|) over all grid pairs.  mod_f checks
    |sigma(x)-sigma(y)|^2 <= |f(x)-f(y)| plus monotonicity/boundedness of f
    on the grid.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size < 2:
        raise InputError("modulus check needs a grid with at least 2 points")
    svals = _eval_checked(triple.diffusion, grid, "diffusion")
    dx = np.abs(grid[:, None] - grid[None, :])
    ds2 = (svals[:, None] - svals[None, :]) ** 2
    iu = np.triu_indices(grid.size, k=1)

    if spec.kind == "monotone_bound" or spec.f is not None or (spec.rho is None and triple.modulus_f is not None):
        f = spec.f if spec.f is not None else triple.modulus_f
        if f is None:
            raise InputError("mod_f check without a candidate bounding function")
        fvals = _eval_checked(f, grid, "modulus bound f")
        steps = np.diff(fvals)
        if np.any(steps < -_REL_TOL * (1.0 + np.abs(fvals[:-1]))):
            j = int(np.argmin(steps))
            return ConditionReport("mod_f", "fail",
                                   {"reason": "f not non-decreasing",
                                    "pair": [float(grid[j]), float(grid[j + 1])]},
                                   _grid_descriptor(grid), margin=float(steps.min()))
        rhs = np.abs(fvals[:, None] - fvals[None, :])
        margins = (rhs - ds2)[iu]
        cond = "mod_f"
    else:
        if spec.rho is None:
            raise InputError("mod_rho check without a modulus function")
        if not spec.divergence_flag:
            return ConditionReport("mod_rho", "fail",
                                   {"reason": "modulus not admissible"},
                                   _grid_descriptor(grid), margin=-math.inf)
        rhs = np.asarray(spec.rho(dx[iu]), dtype=float)
        margins = rhs - ds2[iu]
        cond = "mod_rho"

    idx = int(np.argmin(margins))
    xi, yi = iu[0][idx], iu[1][idx]
    worst = float(margins[idx])
    witness = {"pair": [float(grid[xi]), float(grid[yi])], "margin": worst}
    if worst < -_REL_TOL * (1.0 + abs(worst)):
        return ConditionReport(cond, "fail", witness, _grid_descriptor(grid), margin=worst)
    return ConditionReport(cond, "pass", witness, _grid_descriptor(grid), margin=worst)


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

class MollifiedFunction:
    """Gaussian smoothing x -> E f(x + xi) with xi ~ N(0, 1/n).

    Without declared breakpoints the expectation is a Gauss-Hermite sum,
    f_n(x) = sum_i c_i f(x + d_i) with fixed convex weights c_i, which
    preserves global bounds and monotonicity exactly.  With breakpoints the
    kernel integral is split at them and each smooth piece handled by
    Gauss-Legendre against the Gaussian density (clipped at 8 standard
    deviations, mass error < 1e-15); weights are normalized so the rule
    stays a convex combination.  The derivative uses the score-weighted
    integrand d/dx E f(x+xi) = E[f(x+xi) * xi * n].
    """

    def __init__(self, fn: Callable, n: int, quadrature_order: int = 32,
                 breakpoints: Sequence[float] = ()):
        if n < 1:
            raise ConfigError("mollification level n must be >= 1")
        if quadrature_order < 4:
            raise ConfigError("quadrature_order must be at least 4")
        self.fn = fn
        self.level = int(n)
        self.order = int(quadrature_order)
        self.sd = 1.0 / math.sqrt(n)
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints))
        if self.breakpoints:
            self._gl_t, self._gl_w = leggauss(self.order)
        else:
            t, w = hermgauss(self.order)
            self._offsets = t * math.sqrt(2.0) * self.sd
            self._weights = w / math.sqrt(math.pi)

    def __call__(self, x) -> np.ndarray:
        return self._reduce(x, score=False)

    def derivative(self, x) -> np.ndarray:
        return self._reduce(x, score=True)

    def _reduce(self, x, score: bool) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x).ravel()
        if not self.breakpoints:
            pts = xv[:, None] + self._offsets[None, :]
            vals = np.asarray(self.fn(pts.ravel()), dtype=float).reshape(pts.shape)
            if score:
                w = self._weights[None, :] * self._offsets[None, :] * self.level
            else:
                w = self._weights[None, :]
            out = (vals * w).sum(axis=1)
        else:
            out = self._piecewise(xv, score)
        if scalar:
            return float(out[0])
        return out.reshape(np.atleast_1d(x).shape)

    def _piecewise(self, xv: np.ndarray, score: bool) -> np.ndarray:
        """Kernel integral split at the breakpoints, vectorized over x.

        The real line is cut at the declared breakpoints; on each piece the
        integrand f(y) * gaussian(y - x) is smooth, and the integration
        window per x is clipped to x +/- 8 sd (tail mass < 1e-14).
        """
        lo, hi = xv - 8.0 * self.sd, xv + 8.0 * self.sd
        cuts = [-math.inf, *self.breakpoints, math.inf]
        inv_var = float(self.level)
        num = np.zeros_like(xv)
        mass = np.zeros_like(xv)
        for c, d in zip(cuts[:-1], cuts[1:]):
            a = np.maximum(lo, c)
            b = np.minimum(hi, d)
            half = 0.5 * np.maximum(b - a, 0.0)
            mid = np.where(half > 0, 0.5 * (a + b), xv)
            y = mid[:, None] + half[:, None] * self._gl_t[None, :]
            dens = np.exp(-0.5 * inv_var * (y - xv[:, None]) ** 2) * math.sqrt(inv_var / (2 * math.pi))
            w = half[:, None] * self._gl_w[None, :] * dens
            fv = np.asarray(self.fn(y.ravel()), dtype=float).reshape(y.shape)
            if score:
                num += (w * fv * (y - xv[:, None]) * inv_var).sum(axis=1)
            else:
                num += (w * fv).sum(axis=1)
            mass += w.sum(axis=1)
        return num / mass


def mollify(fn: Callable, n: int, quadrature_order: int = 32,
            breakpoints: Sequence[float] = ()) -> MollifiedFunction:
    """Smooth a scalar function (or a jump-kernel slice g(., u)) at level n."""
    return MollifiedFunction(fn, n, quadrature_order, breakpoints)
