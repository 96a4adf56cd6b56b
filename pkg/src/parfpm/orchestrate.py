"""Tile worker pool plus the offline and online processing flows."""
from __future__ import annotations

import csv
import hashlib
import logging
import os
import queue
import threading
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from . import optics
from .errors import ConfigError, DataError
from .forward import Frame, FrameSet
from .optics import OpticalConfig
from .pipeline import pipelined_solve, resolve_lag
from .recon import TileProblem, led_sequence, project, run_passes, search_defocus, solve
from .tiles import TileSpec, partition_tiles

log = logging.getLogger(__name__)

TIMING_COLUMNS = ["run_id", "mode", "workers", "lag", "tiles", "iters", "wall_s",
                  "per_tile_mean_s"]


@dataclass
class RunResult:
    tiles: list[TileSpec]
    fields: list[np.ndarray]
    metrics: list[dict]
    tile_seconds: list[float]
    wall_s: float
    mode: str
    workers: int
    iters: int
    lag: str = "-"
    acquisition_s: float | None = None
    extra: dict = field(default_factory=dict)

    def timing_row(self, run_id: str) -> dict:
        return {"run_id": run_id, "mode": self.mode, "workers": self.workers, "lag": self.lag,
                "tiles": len(self.tiles), "iters": self.iters,
                "wall_s": round(self.wall_s, 6),
                "per_tile_mean_s": round(float(np.mean(self.tile_seconds)), 6)}

    def stitch(self, cfg: OpticalConfig) -> np.ndarray:
        from .stitch import stitch_mosaic
        return stitch_mosaic(list(zip(self.tiles, self.fields)), cfg)

    def digest(self) -> str:
        h = hashlib.sha256()
        for f in self.fields:
            h.update(np.ascontiguousarray(f).tobytes())
        return h.hexdigest()


def write_timing_csv(path, rows: Iterable[dict], append: bool = False) -> None:
    exists = os.path.exists(path) and append
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TIMING_COLUMNS)
        if not exists:
            w.writeheader()
        for r in rows:
            w.writerow(r)


def read_timing_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _solve_tile(problem: TileProblem, iters: int, lag, threads: int, pipelined: bool,
                unsafe: bool, fft_workers: int):
    optics.FFT_WORKERS = fft_workers
    t0 = time.perf_counter()
    if pipelined:
        hr, metrics = pipelined_solve(problem, iters, lag, unsafe, threads)
    else:
        hr, metrics = solve(problem, iters)
    return hr, metrics, time.perf_counter() - t0


def _continue_tile(problem: TileProblem, spectrum: np.ndarray, passes: int, fft_workers: int):
    optics.FFT_WORKERS = fft_workers
    t0 = time.perf_counter()
    canvas = problem.new_canvas()
    canvas.spectrum[...] = spectrum
    residuals = run_passes(problem, canvas, passes)
    return canvas.field(), residuals, time.perf_counter() - t0


def _map_tiles(fn, jobs: Sequence[tuple], workers: int) -> list:
    """Run ``fn(*job)`` per tile, inline or on a process pool, in job order."""
    if workers <= 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def resolve_tiles(frames: FrameSet, cfg: OpticalConfig, tiles: Sequence[TileSpec] | None,
                  defocus=0.0, defocus_candidates: Sequence[float] = ()) -> list[TileSpec]:
    if tiles is None:
        tiles = partition_tiles(frames.fov, cfg, None if defocus == "auto" else defocus)
    tiles = list(tiles)
    resolved = []
    for t in tiles:
        if t.defocus is None:
            z = search_defocus(frames, t, cfg, list(defocus_candidates))
            log.info("tile %s: defocus search picked %.3f um", t.grid_pos, z)
            t = t.with_defocus(z)
        resolved.append(t)
    return resolved


def run_offline(frames: FrameSet, cfg: OpticalConfig, workers: int = 1, *,
                tiles: Sequence[TileSpec] | None = None, iters: int = 1,
                order: str = "spiral", seq: Sequence[tuple[int, int]] | None = None,
                lag="auto", pipeline: bool | None = None, unsafe_lag: bool = False,
                fft_workers: int = 1, defocus=0.0,
                defocus_candidates: Sequence[float] = ()) -> RunResult:
    """Reconstruct every tile after acquisition has finished.

    Whole tiles go to a pool of ``workers`` processes. Pipelining inside a
    tile is used by default only when there are more workers than tiles;
    ``pipeline=True`` forces it.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    if not frames.complete and seq is None:
        raise DataError("incomplete dataset: frames missing for some scan LEDs")
    t_start = time.perf_counter()
    tiles = resolve_tiles(frames, cfg, tiles, defocus, defocus_candidates)
    seq = led_sequence(order, cfg.led_scan, cfg.center_led) if seq is None else list(seq)
    if pipeline is None:
        pipeline = workers > len(tiles)
    threads = max(1, workers // len(tiles))
    jobs = [(TileProblem.from_frames(frames, t, cfg, seq), iters, lag, threads, pipeline,
             unsafe_lag, fft_workers) for t in tiles]
    if pipeline:
        for job in jobs:        # refuse an unsafe lag before any work is dispatched
            resolve_lag(job[0], lag, unsafe_lag)
    out = _map_tiles(_solve_tile, jobs, workers)
    wall = time.perf_counter() - t_start
    lags = sorted({str(m["lag"]) + (" nondeterministic" if m.get("nondeterministic") else "")
                   for _, m, _ in out if m["lag"] is not None})
    return RunResult(tiles, [o[0] for o in out], [o[1] for o in out], [o[2] for o in out],
                     wall, "offline", workers, iters, "/".join(lags) or "-")


class ReplayStream:
    """Single-producer frame source replaying acquisition times.

    A background thread releases frame ``k`` at ``times[k]`` seconds after
    :meth:`start`; consumers iterate without ever blocking the producer.
    """

    def __init__(self, frames: Sequence[Frame], times: Sequence[float], timeout: float = 30.0):
        if len(frames) != len(times):
            raise ConfigError("one arrival time per frame is required")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ConfigError("arrival times must be non-decreasing")
        self.frames = list(frames)
        self.times = [float(t) for t in times]
        self.timeout = timeout
        self._queue: queue.Queue = queue.Queue(maxsize=len(self.frames) + 1)
        self._thread: threading.Thread | None = None
        self.t0: float | None = None

    @classmethod
    def from_frameset(cls, frames: FrameSet, delay: float | None = None,
                      timeout: float = 30.0) -> ReplayStream:
        """Replay manifest timestamps; ``delay`` rescales them to that frame spacing."""
        ts = np.array([f.timestamp for f in frames.frames], dtype=float)
        if delay is not None:
            spacing = np.median(np.diff(np.concatenate([[0.0], ts])))
            ts = ts * (delay / spacing) if spacing > 0 else np.arange(1, len(ts) + 1) * delay
        return cls(frames.frames, ts, timeout)

    def start(self) -> ReplayStream:
        self.t0 = time.perf_counter()
        self._thread = threading.Thread(target=self._produce, daemon=True)
        self._thread.start()
        return self

    def _produce(self):
        for frame, t in zip(self.frames, self.times):
            wait = self.t0 + t - time.perf_counter()
            if wait > 0:
                time.sleep(wait)
            self._queue.put(frame)
        self._queue.put(None)

    def __iter__(self) -> Iterator[Frame]:
        if self._thread is None:
            self.start()
        while True:
            try:
                frame = self._queue.get(timeout=self.timeout)
            except queue.Empty:
                raise DataError(f"frame stream stalled for more than {self.timeout}s") from None
            if frame is None:
                return
            yield frame

    @property
    def acquisition_s(self) -> float:
        return self.times[-1] if self.times else 0.0


Updater = Callable[..., float]


def run_online(stream: ReplayStream, cfg: OpticalConfig, workers: int = 1, *,
               tiles: Sequence[TileSpec] | None = None, fov: tuple[int, int] | None = None,
               iters: int = 1, intensity_scale: float = 1.0, fft_workers: int = 1,
               updater: Updater = project) -> RunResult:
    """Update every tile as each frame arrives, overlapping acquisition.

    One pass happens in-stream (in arrival order); the remaining
    ``iters - 1`` passes run on the worker pool once the stream ends.
    Canvases start from the on-axis frame; frames arriving before it are
    buffered and replayed as soon as it is in.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    if tiles is None:
        if fov is None:
            h, w = stream.frames[0].image.shape
            fov = (w, h)
        tiles = partition_tiles(fov, cfg)
    tiles = list(tiles)
    if any(t.defocus is None for t in tiles):
        raise ConfigError("online mode needs explicit per-tile defocus; "
                          "the defocus search only runs offline")
    optics.FFT_WORKERS = fft_workers
    from .optics import build_pupil
    from .recon import initial_spectrum, SpectrumCanvas

    pupils = {}
    for t in tiles:
        if t.defocus not in pupils:
            pupils[t.defocus] = build_pupil(cfg, cfg.tile_size, t.defocus)
    canvases: list[SpectrumCanvas | None] = [None] * len(tiles)
    busy = [0.0] * len(tiles)
    residuals: list[list[float]] = [[] for _ in tiles]
    received: list[Frame] = []
    pending: list[Frame] = []
    center = tuple(cfg.center_led)

    def amp_of(frame: Frame, t: TileSpec) -> np.ndarray:
        ys, xs = t.slices
        return np.sqrt(frame.image[ys, xs] / intensity_scale)

    def tile_work(i: int, batch: list[Frame]):
        t = tiles[i]
        t0 = time.perf_counter()
        if canvases[i] is None:
            init = next(f for f in received if tuple(f.led) == center)
            canvases[i] = SpectrumCanvas(initial_spectrum(amp_of(init, t), cfg), cfg)
        pupil = pupils[t.defocus]
        for frame in batch:
            off = optics.spectrum_offset(t.wavevector(frame.led, cfg), cfg)
            residuals[i].append(updater(canvases[i], amp_of(frame, t), off, pupil))
        busy[i] += time.perf_counter() - t0

    t_start = time.perf_counter()
    stream.start()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for frame in stream:
            received.append(frame)
            pending.append(frame)
            if not any(tuple(f.led) == center for f in received):
                continue
            batch, pending = pending, []
            list(pool.map(lambda i: tile_work(i, batch), range(len(tiles))))
    if pending or any(c is None for c in canvases):
        raise DataError(f"on-axis LED {center} never arrived; cannot initialise")
    in_stream_done = time.perf_counter() - t_start

    seq = [tuple(f.led) for f in received]
    fields: list[np.ndarray]
    metrics = [{"residuals": [float(np.mean(r))], "iters": iters, "lag": None}
               for r in residuals]
    if iters > 1:
        fs = FrameSet(received, cfg, intensity_scale)
        jobs = [(TileProblem.from_frames(fs, t, cfg, seq), canvases[i].spectrum, iters - 1,
                 fft_workers) for i, t in enumerate(tiles)]
        out = _map_tiles(_continue_tile, jobs, workers)
        fields = [o[0] for o in out]
        for i, o in enumerate(out):
            metrics[i]["residuals"] += o[1]
            busy[i] += o[2]
    else:
        fields = [c.field() for c in canvases]
    wall = time.perf_counter() - t_start
    return RunResult(tiles, fields, metrics, busy, wall, "online", workers, iters,
                     acquisition_s=stream.acquisition_s,
                     extra={"in_stream_s": in_stream_done, "sequence": seq})


def bench(frames: FrameSet, cfg: OpticalConfig, workers_list: Sequence[int],
          tiles_list: Sequence[int], iters: int = 1, order: str = "spiral",
          run_prefix: str = "bench") -> tuple[list[dict], dict]:
    """Offline timing grid over (workers, tile count).

    Returns the CSV rows and a summary with speedups and the largest
    tile-output difference between worker counts.
    """
    all_tiles = partition_tiles(frames.fov, cfg)
    if max(tiles_list) > len(all_tiles):
        raise ConfigError(f"requested {max(tiles_list)} tiles but the partition has "
                          f"{len(all_tiles)}")
    rows, wall, digests = [], {}, {}
    reference: dict[int, list[np.ndarray]] = {}
    max_diff = 0.0
    for w in workers_list:
        for n in tiles_list:
            res = run_offline(frames, cfg, w, tiles=all_tiles[:n], iters=iters, order=order,
                              pipeline=False)
            rows.append(res.timing_row(f"{run_prefix}-w{w}-t{n}"))
            wall[(w, n)] = res.wall_s
            digests[(w, n)] = res.digest()
            if n not in reference:
                reference[n] = res.fields
            else:
                diff = max(float(np.max(np.abs(a - b))) for a, b in zip(reference[n], res.fields))
                max_diff = max(max_diff, diff)
    base = workers_list[0]
    speedup = {f"w{w}-t{n}": wall[(base, n)] / wall[(w, n)]
               for w in workers_list for n in tiles_list}
    summary = {"speedup": speedup, "max_abs_diff_across_workers": max_diff,
               "digests": {f"w{w}-t{n}": d for (w, n), d in digests.items()},
               "baseline_workers": base}
    return rows, summary
