"""Driving noise: Brownian increments plus a marked Poisson jump stream.

A :class:`NoisePath` is one realization of the pair (B, N) on [0, T]: a
uniform base skeleton carrying Gaussian increments, a finite list of jump
times with marks drawn from the (truncated) intensity measure, and a
uniform auxiliary per jump for later thinning.  Jump times are inserted
into the grid (jump-adapted grid) so schemes can apply the kernel exactly
at jump times.

Determinism contract: (measure spec, T, h, seed, rate_scale) fully
determine the path, bitwise.  The generator is counter-based (Philox) with
named sub-streams for the Brownian skeleton, the jump count, the jump
times, the marks, the auxiliaries, and the within-cell splits, so the
Brownian skeleton is structurally independent of the jump configuration:
swapping the jump sampler cannot perturb the Brownian increments.

Small-jump truncation is not compensated: the raw measure drives the
equation and the dropped drift mass is reported on the measure spec.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .coefficients import IntensityMeasureSpec
from .errors import InputError, MeasureError

DUMP_FORMAT_VERSION = 1

_STREAMS = ("brownian", "jump-count", "jump-times", "marks", "aux", "split", "bridge")


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, structurally independent generator derived from one seed."""
    tag = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoisePath:
    """One realization of the driving noise on a jump-adapted grid.

    ``skeleton`` is the uniform base grid (plus T); ``grid`` is its union
    with the jump times; ``increments`` are the Brownian increments per
    grid cell.  ``jump_aux`` are U[0, aux_scale] auxiliaries used by the
    thinning construction.
    """

    horizon: float
    base_step: float
    skeleton: np.ndarray
    skeleton_increments: np.ndarray
    grid: np.ndarray
    increments: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_aux: np.ndarray
    aux_scale: float
    seed: int
    spec_hash: str

    def __post_init__(self):
        if self.grid[0] != 0.0 or abs(self.grid[-1] - self.horizon) > 1e-12:
            raise InputError("grid must span [0, T]")
        if np.any(np.diff(self.grid) <= 0):
            raise InputError("grid times must be strictly increasing")
        if self.increments.shape != (self.grid.size - 1,):
            raise InputError("one Brownian increment per grid cell required")
        if self.skeleton_increments.shape != (self.skeleton.size - 1,):
            raise InputError("one increment per skeleton cell required")
        if self.jump_times.size:
            if np.any(np.diff(self.jump_times) <= 0):
                raise InputError("jump times must be strictly increasing")
            if self.jump_times[0] <= 0 or self.jump_times[-1] > self.horizon:
                raise InputError("jump times must lie in (0, T]")
            pos = np.searchsorted(self.grid, self.jump_times)
            if not np.array_equal(self.grid[pos], self.jump_times):
                raise InputError("every jump time must be a grid point")
        for arr in (self.skeleton, self.skeleton_increments, self.grid,
                    self.increments, self.jump_times, self.jump_marks, self.jump_aux):
            arr.setflags(write=False)

    @property
    def jump_count(self) -> int:
        return int(self.jump_times.size)

    def brownian_path(self) -> np.ndarray:
        """B evaluated on the grid (B_0 = 0)."""
        out = np.empty(self.grid.size)
        out[0] = 0.0
        np.cumsum(self.increments, out=out[1:])
        return out


def _uniform_skeleton(T: float, h: float) -> np.ndarray:
    m = max(int(math.ceil(T / h - 1e-9)), 1)
    pts = np.arange(m + 1, dtype=float) * h
    pts[-1] = min(pts[-1], T)
    if pts[-1] < T - 1e-12 * max(T, 1.0):
        pts = np.append(pts, T)
    pts[-1] = T
    return pts


def _split_cell(rng: np.random.Generator, total: float, edges: np.ndarray) -> np.ndarray:
    """Bridge-split one Brownian increment over sub-cells given by edges.

    Conditional sampling: sub-increment j given the remaining total is
    Gaussian with mean w_j/W * rem and variance w_j*(W-w_j)/W; the last
    sub-increment takes the remainder, so the pieces sum to ``total``
    exactly.
    """
    widths = np.diff(edges)
    k = widths.size
    out = np.empty(k)
    if k == 1:
        out[0] = total
        return out
    zs = rng.standard_normal(k - 1)
    rem = total
    rem_w = widths.sum()
    for j in range(k - 1):
        w = widths[j]
        var = w * (rem_w - w) / rem_w
        out[j] = rem * (w / rem_w) + math.sqrt(max(var, 0.0)) * zs[j]
        rem -= out[j]
        rem_w -= w
    out[k - 1] = total - out[:k - 1].sum()
    # rounding can leave the remainder an ulp off; nudging the
    # finest-granularity element usually lands the exactly-rounded sum on
    # the target bitwise (when every element is much larger than the total
    # the target can sit between reachable sums: a <= 1 ulp gap remains)
    target = float(total)
    for idx in np.argsort(np.abs(out)):
        for _ in range(8):
            s = math.fsum(out)
            if s == target:
                return out
            out[idx] = np.nextafter(out[idx], math.inf if s < target else -math.inf)
    return out


def sample_noise(measure: IntensityMeasureSpec, T: float, h: float, seed: int,
                 rate_scale: float = 1.0) -> NoisePath:
    """Draw one noise realization.

    Jump count ~ Poisson(lambda * rate_scale * T), times i.i.d. uniform on
    (0, T], marks i.i.d. from the normalized truncated measure, auxiliaries
    uniform on [0, rate_scale].  ``rate_scale`` > 1 over-samples candidate
    jumps for thinning-based solvers (set it to 1/sigma_0^2 there).
    """
    if T <= 0 or h <= 0:
        raise InputError("need T > 0 and h > 0")
    if rate_scale <= 0:
        raise InputError("rate_scale must be positive")
    lam = measure.total_mass * rate_scale
    if not math.isfinite(lam):
        raise MeasureError("truncated jump intensity mass is not finite")

    skeleton = _uniform_skeleton(T, h)
    inc = substream(seed, "brownian").standard_normal(skeleton.size - 1) * np.sqrt(np.diff(skeleton))

    n_jumps = int(substream(seed, "jump-count").poisson(lam * T)) if lam > 0 else 0
    if n_jumps > 0:
        u = substream(seed, "jump-times").random(n_jumps)
        times = np.sort((1.0 - u) * T)  # values in (0, T]
        marks = measure.sample_marks(substream(seed, "marks"), n_jumps)
        aux = substream(seed, "aux").random(n_jumps) * rate_scale
    else:
        times = np.empty(0)
        marks = np.empty(0)
        aux = np.empty(0)

    grid = np.union1d(skeleton, times)
    if grid.size - 1 == inc.size:
        increments = inc
    else:
        increments = _split_skeleton_increments(skeleton, inc, grid, substream(seed, "split"))

    return NoisePath(
        horizon=float(T), base_step=float(h), skeleton=skeleton,
        skeleton_increments=inc.copy(), grid=grid, increments=increments,
        jump_times=times, jump_marks=np.asarray(marks, dtype=float),
        jump_aux=aux, aux_scale=float(rate_scale), seed=int(seed),
        spec_hash=measure.spec_hash(),
    )


def _split_skeleton_increments(skeleton, skeleton_inc, grid, rng) -> np.ndarray:
    """Distribute skeleton-cell increments onto the finer jump-adapted grid."""
    out = np.empty(grid.size - 1)
    pos = np.searchsorted(grid, skeleton)
    for k in range(skeleton.size - 1):
        a, b = pos[k], pos[k + 1]
        if b - a == 1:
            out[a] = skeleton_inc[k]
        else:
            out[a:b] = _split_cell(rng, skeleton_inc[k], grid[a:b + 1])
    return out


def refine(noise: NoisePath, factor: int, seed2: int) -> NoisePath:
    """Bridge-refine the base skeleton by an integer factor.

    Every skeleton cell is split into ``factor`` equal sub-cells (parent
    points are kept bitwise, so index j on the coarse skeleton maps to
    index factor*j on the refined one); the refined grid is the union of
    the refined skeleton with the unchanged jump times.  Coarse grid-cell
    increments are exactly the sums of the refined increments they cover,
    and the jump list is preserved bitwise.
    """
    if factor < 2:
        raise InputError("refinement factor must be >= 2")
    rng = substream(seed2, "bridge")

    sk = noise.skeleton
    new_sk = np.empty((sk.size - 1) * factor + 1)
    new_sk[0] = sk[0]
    for i in range(sk.size - 1):
        new_sk[i * factor + 1:(i + 1) * factor + 1] = np.linspace(sk[i], sk[i + 1], factor + 1)[1:]

    new_grid = np.union1d(new_sk, noise.grid)
    pos = np.searchsorted(new_grid, noise.grid)
    new_inc = np.empty(new_grid.size - 1)
    for i in range(noise.grid.size - 1):
        a, b = pos[i], pos[i + 1]
        new_inc[a:b] = _split_cell(rng, noise.increments[i], new_grid[a:b + 1])

    return NoisePath(
        horizon=noise.horizon, base_step=noise.base_step / factor,
        skeleton=new_sk, skeleton_increments=aggregate_increments(new_grid, new_inc, new_sk),
        grid=new_grid, increments=new_inc,
        jump_times=noise.jump_times.copy(), jump_marks=noise.jump_marks.copy(),
        jump_aux=noise.jump_aux.copy(), aux_scale=noise.aux_scale,
        seed=int(seed2), spec_hash=noise.spec_hash,
    )


def replay_slice(noise: NoisePath, t0: float, t1: float) -> NoisePath:
    """Restriction of the noise to (t0, t1], re-anchored at time 0.

    t0 and t1 must be existing grid points so the restriction is exact;
    jumps at t0 stay with the left piece, jumps at t1 with this one.
    """
    if not (0.0 <= t0 < t1 <= noise.horizon):
        raise InputError(f"bad interval ({t0}, {t1}]")
    i0 = _grid_index(noise.grid, t0)
    i1 = _grid_index(noise.grid, t1)
    grid = noise.grid[i0:i1 + 1] - noise.grid[i0]
    grid = grid.copy()
    grid[0] = 0.0
    jmask = (noise.jump_times > t0) & (noise.jump_times <= t1)
    sk0 = np.searchsorted(noise.skeleton, t0, side="left")
    sk1 = np.searchsorted(noise.skeleton, t1, side="right") - 1
    sk = noise.skeleton[sk0:sk1 + 1] - t0
    sk = np.unique(np.concatenate([[0.0], sk[sk >= 0], [grid[-1]]]))
    increments = noise.increments[i0:i1].copy()
    return NoisePath(
        horizon=float(grid[-1]), base_step=noise.base_step, skeleton=sk,
        skeleton_increments=aggregate_increments(grid, increments, sk),
        grid=grid, increments=increments,
        jump_times=noise.jump_times[jmask] - t0,
        jump_marks=noise.jump_marks[jmask].copy(),
        jump_aux=noise.jump_aux[jmask].copy(), aux_scale=noise.aux_scale,
        seed=noise.seed, spec_hash=noise.spec_hash,
    )


def _grid_index(grid: np.ndarray, t: float) -> int:
    i = int(np.searchsorted(grid, t))
    if i >= grid.size or grid[i] != t:
        raise InputError(f"time {t} is not a grid point; slice at grid points only")
    return i


def aggregate_increments(grid: np.ndarray, increments: np.ndarray,
                         coarse: np.ndarray) -> np.ndarray:
    """Sum fine-grid increments over the cells of a coarser sub-grid.

    ``coarse`` must be a subset of ``grid``.  Summation is exactly rounded,
    so a refinement aggregates back to its parent increments exactly as
    real numbers; the float result matches the parent bitwise except when
    a parent increment is far smaller than its sub-increments, where one
    final rounding (<= 1 ulp) can remain.  Solvers never re-sum: they read
    the stored skeleton increments directly.
    """
    pos = np.searchsorted(grid, coarse)
    if not np.array_equal(grid[pos], coarse):
        raise InputError("coarse grid is not a subset of the fine grid")
    out = np.empty(coarse.size - 1)
    for i in range(coarse.size - 1):
        a, b = pos[i], pos[i + 1]
        out[i] = increments[a] if b - a == 1 else math.fsum(increments[a:b])
    return out


def concat_slices(first: NoisePath, second: NoisePath) -> np.ndarray:
    """Increments of two adjacent slices, concatenated (test helper)."""
    return np.concatenate([first.increments, second.increments])


def save_noise(noise: NoisePath, path) -> None:
    """Versioned binary dump of a noise realization."""
    np.savez(
        path, format_version=DUMP_FORMAT_VERSION,
        horizon=noise.horizon, base_step=noise.base_step, aux_scale=noise.aux_scale,
        seed=noise.seed, spec_hash=noise.spec_hash, skeleton=noise.skeleton,
        skeleton_increments=noise.skeleton_increments,
        grid=noise.grid, increments=noise.increments, jump_times=noise.jump_times,
        jump_marks=noise.jump_marks, jump_aux=noise.jump_aux,
    )


def load_noise(path) -> NoisePath:
    with np.load(path, allow_pickle=False) as d:
        version = int(d["format_version"])
        if version != DUMP_FORMAT_VERSION:
            raise InputError(f"unsupported noise dump version {version}")
        return NoisePath(
            horizon=float(d["horizon"]), base_step=float(d["base_step"]),
            skeleton=d["skeleton"].copy(),
            skeleton_increments=d["skeleton_increments"].copy(),
            grid=d["grid"].copy(),
            increments=d["increments"].copy(), jump_times=d["jump_times"].copy(),
            jump_marks=d["jump_marks"].copy(), jump_aux=d["jump_aux"].copy(),
            aux_scale=float(d["aux_scale"]), seed=int(d["seed"]),
            spec_hash=str(d["spec_hash"]),
        )
