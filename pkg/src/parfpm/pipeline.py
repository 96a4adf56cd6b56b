"""Pipelined execution of reconstruction passes inside one tile.

Pass ``s`` visits sequence position ``p`` in round ``p + s * lag``. If
every pair of positions closer than ``lag`` in the sequence has disjoint
pupil supports, each round touches disjoint canvas pixels and every
conflicting pair keeps its sequential order, so the result is
bit-identical to running the passes one after another.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, UnsafeLagError
from .forward import FrameSet
from .optics import OpticalConfig, spectrum_offset
from .recon import TileProblem, project
from .tiles import TileSpec


def offsets_conflict(a: tuple[int, int], b: tuple[int, int], radius_px: float) -> bool:
    # touching disks (distance exactly 2r) can share a boundary pixel
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= 2 * radius_px


def min_safe_lag_offsets(offsets: Sequence[tuple[int, int]], radius_px: float) -> int:
    """1 + the largest sequence gap between two positions whose disks overlap."""
    if not offsets:
        raise ConfigError("empty LED sequence")
    off = np.asarray(offsets, dtype=float)
    n = len(off)
    worst = 0
    for i in range(n):
        d = np.hypot(*(off[i + 1:] - off[i]).T) if i + 1 < n else np.empty(0)
        hits = np.flatnonzero(d <= 2 * radius_px)
        if hits.size:
            worst = max(worst, int(hits[-1]) + 1)
    return worst + 1


def min_safe_lag(seq: Sequence[tuple[int, int]], wavevectors: Mapping, radius_px: float,
                 cfg: OpticalConfig) -> int:
    """Smallest lag for which pipelined passes reproduce sequential ones."""
    offsets = [spectrum_offset(wavevectors[tuple(led)], cfg) for led in seq]
    return min_safe_lag_offsets(offsets, radius_px)


@dataclass(frozen=True)
class PipelineSchedule:
    lag: int
    stages: int
    length: int
    rounds: tuple[tuple[tuple[int, int], ...], ...]   # (stage, position) entries

    @classmethod
    def build(cls, length: int, stages: int, lag: int) -> PipelineSchedule:
        if lag < 1:
            raise ConfigError(f"lag must be >= 1, got {lag}")
        if stages < 1 or length < 1:
            raise ConfigError("schedule needs at least one stage and one position")
        n_rounds = length + (stages - 1) * lag
        rounds = []
        for r in range(n_rounds):
            entries = tuple((s, r - s * lag) for s in range(stages)
                            if 0 <= r - s * lag < length)
            if entries:
                rounds.append(entries)
        return cls(lag, stages, length, tuple(rounds))

    @property
    def width(self) -> int:
        return max(len(r) for r in self.rounds)

    def is_safe(self, offsets: Sequence[tuple[int, int]], radius_px: float) -> bool:
        """Brute-force check that every round has pairwise disjoint supports."""
        for entries in self.rounds:
            for i, (_, p) in enumerate(entries):
                for _, q in entries[i + 1:]:
                    if offsets_conflict(offsets[p], offsets[q], radius_px):
                        return False
        return True


def solve_pipelined(problem: TileProblem, schedule: PipelineSchedule,
                    threads: int | None = None, nondeterministic: bool = False):
    """Run ``problem`` under ``schedule``; rounds are barrier-synchronised."""
    pupil = problem.pupil
    canvas = problem.new_canvas()
    n = len(problem.leds)
    residuals = np.zeros((schedule.stages, n))
    # build the index cache up front so worker threads only read it
    for off in set(problem.offsets):
        canvas.support_index(off, pupil)

    def run(entry):
        s, p = entry
        residuals[s, p] = project(canvas, problem.amplitudes[p], problem.offsets[p], pupil)

    threads = schedule.width if threads is None else max(1, threads)
    if threads == 1:
        for entries in schedule.rounds:
            for e in entries:
                run(e)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for entries in schedule.rounds:
                list(pool.map(run, entries))
    means = [float(np.mean(residuals[s])) for s in range(schedule.stages)]
    metrics = {"residuals": means, "iters": schedule.stages, "lag": schedule.lag}
    if nondeterministic:
        metrics["nondeterministic"] = True
    return canvas.field(), metrics


def resolve_lag(problem: TileProblem, lag: int | str, unsafe: bool = False) -> tuple[int, bool]:
    """Return (lag, nondeterministic) for a requested lag ('auto' or int)."""
    minimum = min_safe_lag_offsets(problem.offsets, problem.pupil.radius_px)
    if lag == "auto":
        return minimum, False
    lag = int(lag)
    if lag < minimum:
        if not unsafe:
            raise UnsafeLagError(lag, minimum)
        return lag, True
    return lag, False


def pipelined_solve(problem: TileProblem, iters: int, lag: int | str = "auto",
                    unsafe: bool = False, threads: int | None = None):
    lag, nondet = resolve_lag(problem, lag, unsafe)
    schedule = PipelineSchedule.build(len(problem.leds), iters, min(lag, len(problem.leds)))
    return solve_pipelined(problem, schedule, threads, nondet)


def pipelined_reconstruct_tile(frames: FrameSet, tile: TileSpec, cfg: OpticalConfig,
                               iters: int, seq: Sequence[tuple[int, int]],
                               lag: int | str = "auto", *, unsafe: bool = False,
                               threads: int | None = None):
    """Pipelined counterpart of :func:`~parfpm.recon.reconstruct_tile`.

    Raises :class:`UnsafeLagError` for a lag below the safe minimum unless
    ``unsafe`` is set, in which case the metrics carry a
    ``nondeterministic`` marker.
    """
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    problem = TileProblem.from_frames(frames, tile, cfg, seq)
    return pipelined_solve(problem, iters, lag, unsafe, threads)
