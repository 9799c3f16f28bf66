"""Vectorized multi-path driver for the jump-adapted Euler scheme.

All solving funnels through :func:`solve_batch`: a batch of paths advances
cell by cell on the shared uniform skeleton, and the (rare) paths with a
jump inside the current cell take a scalar detour through their sub-cells
so the kernel is applied exactly at the jump time with the left limit as
its argument.  Per-path results are bitwise independent of batch
composition, so a path solved alone equals the same path solved inside any
batch.

Streaming statistics attach as recorders; they see every sub-segment
(left-endpoint state and width) and every jump event, which keeps memory
flat for large Monte Carlo runs instead of materializing full paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import CoefficientTriple, IntensityMeasureSpec
from .errors import DivergedError, InputError
from .noise import NoisePath, sample_noise

BLOWUP_GUARD = 1e12


class Recorder:
    """Streaming statistic over a batch of paths; subclass and override."""

    def start(self, n_paths: int, x0: float, skeleton: np.ndarray) -> None:
        pass

    def segment(self, t_left: float, width: float, x_left: np.ndarray,
                x_right: np.ndarray, idx: np.ndarray | None) -> None:
        """One Euler sub-step for paths ``idx`` (None means all paths)."""

    def jump(self, path: int, t: float, left: float, size: float,
             mark: float, accepted: bool) -> None:
        pass

    def cell_complete(self, k: int, t_right: float, state: np.ndarray) -> None:
        """All paths have reached skeleton point k+1."""

    def finish(self, final: np.ndarray) -> None:
        pass


@dataclass
class JumpEvents:
    """Per-path jump bookkeeping collected by the engine."""

    times: list = field(default_factory=list)
    marks: list = field(default_factory=list)
    left: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    accepted: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "times": np.asarray(self.times, dtype=float),
            "marks": np.asarray(self.marks, dtype=float),
            "left": np.asarray(self.left, dtype=float),
            "sizes": np.asarray(self.sizes, dtype=float),
            "accepted": np.asarray(self.accepted, dtype=bool),
        }


@dataclass
class BatchResult:
    skeleton: np.ndarray
    final: np.ndarray
    jumps: list[dict[str, np.ndarray]]
    values: np.ndarray | None = None  # (S, len(skeleton)) when kept


def solve_batch(triple: CoefficientTriple, noises: Sequence[NoisePath], x0: float,
                *, jump_filter: Callable[[float], float] | None = None,
                recorders: Sequence[Recorder] = (), keep_values: bool = False,
                blowup: float = BLOWUP_GUARD) -> BatchResult:
    """Advance every noise realization through the Euler recursion.

    ``jump_filter`` maps the pre-jump state to an acceptance threshold for
    the jump's uniform auxiliary (thinning); None accepts every jump.
    """
    if not noises:
        raise InputError("empty noise batch")
    sk = noises[0].skeleton
    for nz in noises[1:]:
        if nz.skeleton.size != sk.size or not np.array_equal(nz.skeleton, sk):
            raise InputError("all noises in a batch must share the base skeleton")
    n_paths = len(noises)
    n_cells = sk.size - 1
    widths = np.diff(sk)

    inc, detours, jump_lookup = _prepare(noises, sk)

    bfun, sfun, gfun = triple.drift, triple.diffusion, triple.jump
    state = np.full(n_paths, float(x0))
    values = np.empty((n_paths, n_cells + 1)) if keep_values else None
    if keep_values:
        values[:, 0] = state
    events = [JumpEvents() for _ in range(n_paths)]
    for rec in recorders:
        rec.start(n_paths, float(x0), sk)

    all_idx = np.arange(n_paths)
    for k in range(n_cells):
        w = widths[k]
        t_left = sk[k]
        db = inc[:, k]
        new = state + bfun(state) * w + sfun(state) * db
        det = detours.get(k)
        if det is None:
            for rec in recorders:
                rec.segment(t_left, w, state, new, None)
        else:
            for p in det:
                new[p] = _detour(p, k, noises[p], jump_lookup[p], state[p],
                                 bfun, sfun, gfun, jump_filter, recorders, events[p])
            plain = np.setdiff1d(all_idx, det, assume_unique=True)
            if plain.size:
                for rec in recorders:
                    rec.segment(t_left, w, state[plain], new[plain], plain)
        bad = ~np.isfinite(new) | (np.abs(new) > blowup)
        if bad.any():
            p = int(np.argmax(bad))
            raise DivergedError(
                f"path {p} diverged at t={sk[k + 1]:.6g}", time=float(sk[k + 1]))
        state = new
        if keep_values:
            values[:, k + 1] = state
        for rec in recorders:
            rec.cell_complete(k, sk[k + 1], state)

    for rec in recorders:
        rec.finish(state)
    return BatchResult(skeleton=sk, final=state,
                       jumps=[e.arrays() for e in events], values=values)


def _prepare(noises, sk):
    """Skeleton-aligned increments, detour cells, and jump lookups.

    A skeleton cell needs a detour when the path has sub-cells there (a
    jump strictly inside) or a jump exactly at the cell's right edge.
    """
    n_paths = len(noises)
    inc = np.empty((n_paths, sk.size - 1))
    detours: dict[int, list[int]] = {}
    jump_lookup: list[dict[int, int]] = []
    for p, nz in enumerate(noises):
        inc[p] = nz.skeleton_increments
        if nz.jump_times.size == 0:
            jump_lookup.append({})
            continue
        jt_idx = np.searchsorted(nz.grid, nz.jump_times)
        jump_lookup.append({int(gi): j for j, gi in enumerate(jt_idx)})
        cells = {int(np.searchsorted(sk, t, side="left")) - 1 for t in nz.jump_times}
        for c in sorted(cells):
            detours.setdefault(c, []).append(p)
    return inc, detours, jump_lookup


def _detour(p, k, nz, jump_at, x, bfun, sfun, gfun, jump_filter, recorders, ev):
    """Scalar sub-stepping through one skeleton cell containing jump times."""
    pos = np.searchsorted(nz.grid, nz.skeleton[k])
    pos1 = np.searchsorted(nz.grid, nz.skeleton[k + 1])
    idx = np.array([p])
    for i in range(pos, pos1):
        a, b = nz.grid[i], nz.grid[i + 1]
        w = b - a
        xa = np.asarray([x])
        xnew = float(xa[0] + bfun(xa)[0] * w + sfun(xa)[0] * nz.increments[i])
        for rec in recorders:
            rec.segment(float(a), float(w), xa, np.asarray([xnew]), idx)
        x = xnew
        j = jump_at.get(i + 1)
        if j is not None:
            left = x
            mark = nz.jump_marks[j]
            accepted = True
            if jump_filter is not None:
                accepted = bool(nz.jump_aux[j] <= jump_filter(left))
            size = float(np.asarray(gfun(np.asarray([left]), np.asarray([mark])))[0]) if accepted else 0.0
            if accepted:
                x = left + size
            ev.times.append(float(b))
            ev.marks.append(float(mark))
            ev.left.append(float(left))
            ev.sizes.append(size)
            ev.accepted.append(accepted)
            for rec in recorders:
                rec.jump(p, float(b), float(left), size, float(mark), accepted)
    return x


# ---------------------------------------------------------------------------
# Stock recorders
# ---------------------------------------------------------------------------

class SupAbsRecorder(Recorder):
    """Running sup of |X| over all visited states (incl. left limits)."""

    def start(self, n_paths, x0, skeleton):
        self.sup = np.full(n_paths, abs(x0))

    def segment(self, t_left, width, x_left, x_right, idx):
        m = np.maximum(np.abs(x_left), np.abs(x_right))
        if idx is None:
            np.maximum(self.sup, m, out=self.sup)
        else:
            self.sup[idx] = np.maximum(self.sup[idx], m)

    def jump(self, path, t, left, size, mark, accepted):
        self.sup[path] = max(self.sup[path], abs(left), abs(left + size))

    def result(self) -> np.ndarray:
        return self.sup


class OccupationRecorder(Recorder):
    """Left-point occupation sum(width * 1{|X_left - a| < eps} * weight(X_left)).

    With weight = sigma^2 and division by 2*eps this is the occupation
    local-time estimator; with weight None it is plain occupation time.
    """

    def __init__(self, center: float, eps: float, weight: Callable | None = None,
                 t_max: float = math.inf):
        self.center = center
        self.eps = eps
        self.weight = weight
        self.t_max = t_max

    def start(self, n_paths, x0, skeleton):
        self.occ = np.zeros(n_paths)

    def segment(self, t_left, width, x_left, x_right, idx):
        if t_left >= self.t_max:
            return
        w = min(width, self.t_max - t_left)
        hit = (np.abs(x_left - self.center) < self.eps).astype(float)
        if self.weight is not None:
            hit = hit * self.weight(x_left)
        if idx is None:
            self.occ += w * hit
        else:
            self.occ[idx] += w * hit

    def result(self) -> np.ndarray:
        return self.occ


class OccupationAboveRecorder(Recorder):
    """Left-point occupation time of {X >= level}."""

    def __init__(self, level: float, t_max: float = math.inf):
        self.level = level
        self.t_max = t_max

    def start(self, n_paths, x0, skeleton):
        self.occ = np.zeros(n_paths)

    def segment(self, t_left, width, x_left, x_right, idx):
        if t_left >= self.t_max:
            return
        w = min(width, self.t_max - t_left)
        hit = (x_left >= self.level).astype(float)
        if idx is None:
            self.occ += w * hit
        else:
            self.occ[idx] += w * hit

    def result(self) -> np.ndarray:
        return self.occ


class RuinRecorder(Recorder):
    """First-passage of the state below a barrier (default 0)."""

    def __init__(self, barrier: float = 0.0):
        self.barrier = barrier

    def start(self, n_paths, x0, skeleton):
        self.ruined = np.zeros(n_paths, dtype=bool)
        self.ruin_time = np.full(n_paths, math.nan)
        self.running_min = np.full(n_paths, float(x0))
        if x0 < self.barrier:
            self.ruined[:] = True
            self.ruin_time[:] = 0.0

    def _hit(self, sel, t):
        new = sel & ~self.ruined
        self.ruined |= new
        self.ruin_time[new] = t

    def segment(self, t_left, width, x_left, x_right, idx):
        if idx is None:
            np.minimum(self.running_min, x_right, out=self.running_min)
            self._hit(x_right < self.barrier, t_left + width)
        else:
            self.running_min[idx] = np.minimum(self.running_min[idx], x_right)
            below = np.zeros_like(self.ruined)
            below[idx] = x_right < self.barrier
            self._hit(below, t_left + width)

    def jump(self, path, t, left, size, mark, accepted):
        post = left + size
        self.running_min[path] = min(self.running_min[path], post)
        if post < self.barrier and not self.ruined[path]:
            self.ruined[path] = True
            self.ruin_time[path] = t

    def result(self) -> dict[str, np.ndarray]:
        return {"ruined": self.ruined, "ruin_time": self.ruin_time,
                "running_min": self.running_min}


class MarginalRecorder(Recorder):
    """State captured at the skeleton points closest to the requested times."""

    def __init__(self, times: Sequence[float]):
        self.req = np.asarray(times, dtype=float)

    def start(self, n_paths, x0, skeleton):
        self.idx = np.clip(np.searchsorted(skeleton, self.req - 1e-12), 0, skeleton.size - 1)
        self.snap = np.empty((len(self.req), n_paths))
        for j, i in enumerate(self.idx):
            if i == 0:
                self.snap[j] = x0

    def cell_complete(self, k, t_right, state):
        for j, i in enumerate(self.idx):
            if i == k + 1:
                self.snap[j] = state

    def result(self) -> np.ndarray:
        return self.snap


class ClockInversionRecorder(Recorder):
    """Invert an additive clock A_t = int phi(X_s) ds at requested levels.

    Used to read the original-clock marginal off a time-changed solution:
    with phi = sigma^-2 the level-t capture is the state at the last grid
    point whose accumulated clock is <= t.
    """

    def __init__(self, levels: Sequence[float], phi: Callable[[np.ndarray], np.ndarray]):
        self.levels = np.asarray(levels, dtype=float)
        self.phi = phi

    def start(self, n_paths, x0, skeleton):
        self.A = np.zeros(n_paths)
        self.snap = np.full((len(self.levels), n_paths), float(x0))
        self.done = np.zeros((len(self.levels), n_paths), dtype=bool)

    def segment(self, t_left, width, x_left, x_right, idx):
        inc = width * self.phi(x_left)
        if idx is None:
            newA = self.A + inc
        else:
            newA = self.A.copy()
            newA[idx] = self.A[idx] + inc
        for j, lev in enumerate(self.levels):
            cross = (~self.done[j]) & (newA > lev)
            if cross.any():
                if idx is None:
                    self.snap[j, cross] = x_left[cross]
                else:
                    # map back into the idx-subset ordering
                    sub = cross[idx]
                    self.snap[j, idx[sub]] = x_left[sub]
                self.done[j, cross] = True
        self.A = newA

    def result(self) -> np.ndarray:
        return self.snap


class ValuesRecorder(Recorder):
    """Full state matrix on the skeleton (memory heavy; small batches only)."""

    def start(self, n_paths, x0, skeleton):
        self.values = np.empty((n_paths, skeleton.size))
        self.values[:, 0] = x0

    def cell_complete(self, k, t_right, state):
        self.values[:, k + 1] = state

    def result(self) -> np.ndarray:
        return self.values


def run_monte_carlo(triple: CoefficientTriple, measure: IntensityMeasureSpec,
                    T: float, h: float, x0: float, seeds: Sequence[int],
                    recorder_factory: Callable[[], list[Recorder]],
                    *, rate_scale: float = 1.0,
                    jump_filter: Callable[[float], float] | None = None,
                    chunk: int = 2048) -> list[list]:
    """Chunked driver: sample noise per seed, solve, stream the recorders.

    Returns one list per recorder slot with per-chunk results in seed
    order; chunk boundaries cannot affect any per-path value.
    """
    seeds = list(seeds)
    outputs: list[list] = None
    for lo in range(0, len(seeds), chunk):
        block = seeds[lo:lo + chunk]
        noises = [sample_noise(measure, T, h, s, rate_scale=rate_scale) for s in block]
        recs = recorder_factory()
        solve_batch(triple, noises, x0, jump_filter=jump_filter, recorders=recs)
        if outputs is None:
            outputs = [[] for _ in recs]
        for slot, rec in zip(outputs, recs):
            slot.append(rec.result())
    return outputs


def concat_results(chunks: list) -> np.ndarray:
    """Merge per-chunk per-path arrays back into seed order."""
    return np.concatenate(chunks)
