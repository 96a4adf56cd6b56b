"""Single-tile reconstruction by alternating projections.

The HR spectrum canvas is updated one LED at a time: the block seen
through the pupil is propagated to the camera plane, its amplitude is
replaced by the measured one and the result is written back inside the
pupil support only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, DomainError
from .forward import FrameSet, extract_block
from .optics import (OpticalConfig, Pupil, WaveVector, build_pupil, fft2, ifft2,
                     led_position_um, spectrum_offset)
from .tiles import TileSpec


def led_sequence(order: str, scan: tuple[int, int],
                 center: tuple[int, int] | None = None) -> list[tuple[int, int]]:
    """Update order over a ``scan`` = (rows, cols) LED sub-grid.

    Positions are ``center + relative`` where ``center`` defaults to the
    middle of the scan grid, so the default output is in scan-grid
    coordinates. The spiral starts at the center, steps +col first and
    turns counterclockwise (right, up, left, down).
    """
    rows, cols = scan
    if rows < 1 or cols < 1 or rows % 2 == 0 or cols % 2 == 0:
        raise DomainError(f"scan dimensions must be odd, got {scan}")
    if center is None:
        center = (rows // 2, cols // 2)
    hr, hc = rows // 2, cols // 2
    if order == "raster":
        rel = [(r - hr, c - hc) for r in range(rows) for c in range(cols)]
    elif order == "spiral":
        rel = [(0, 0)]
        r = c = 0
        step = 1
        directions = [(0, 1), (-1, 0), (0, -1), (1, 0)]
        d = 0
        while len(rel) < rows * cols:
            for _ in range(2):
                dr, dc = directions[d % 4]
                for _ in range(step):
                    r, c = r + dr, c + dc
                    if abs(r) <= hr and abs(c) <= hc:
                        rel.append((r, c))
                d += 1
            step += 1
    else:
        raise DomainError(f"unknown update order {order!r}")
    return [(center[0] + dr, center[1] + dc) for dr, dc in rel]


def synthesized_na(cfg: OpticalConfig) -> float:
    """Objective NA plus the largest illumination NA of the scan."""
    h = cfg.led_height * 1000.0
    best = 0.0
    for led in cfg.scan_leds():
        x, y = led_position_um(led, cfg)
        rho = math.hypot(x, y)
        best = max(best, rho / math.hypot(rho, h))
    return cfg.objective_na + best


class SpectrumCanvas:
    """HR spectrum estimate of one tile (centered, side tile_size * upsample)."""

    def __init__(self, spectrum: np.ndarray, cfg: OpticalConfig):
        side = cfg.tile_size * cfg.upsample
        if spectrum.shape != (side, side):
            raise DomainError(f"canvas must be {side}x{side}, got {spectrum.shape}")
        self.spectrum = np.ascontiguousarray(spectrum, dtype=np.complex128)
        self.cfg = cfg
        self.touched: set[tuple[int, int]] = set()
        self._rel_index: dict[int, np.ndarray] = {}

    @property
    def side(self) -> int:
        return self.spectrum.shape[0]

    @property
    def gain(self) -> float:
        return self.cfg.upsample

    def support_index(self, offset: tuple[int, int], pupil: Pupil) -> np.ndarray:
        """Flat canvas indices of the pupil support placed at ``offset``."""
        rel = self._rel_index.get(id(pupil))
        if rel is None:
            n = pupil.grid
            ri, ci = np.divmod(pupil.support_index, n)
            rel = ri * self.side + ci
            self._rel_index[id(pupil)] = rel
        rs, cs = extract_block(self.spectrum, offset, pupil.grid)
        return rel + (rs.start * self.side + cs.start)

    def field(self) -> np.ndarray:
        """HR complex field of the current estimate."""
        return ifft2(self.spectrum)

    def copy(self) -> SpectrumCanvas:
        c = SpectrumCanvas(self.spectrum.copy(), self.cfg)
        c.touched = set(self.touched)
        return c


def project(canvas: SpectrumCanvas, amplitude: np.ndarray, offset: tuple[int, int],
            pupil: Pupil) -> float:
    """One alternating-projection update in place; returns the residual.

    Reads and writes only the support pixels at ``offset``, so updates
    with disjoint supports commute exactly.
    """
    n = pupil.grid
    gidx = canvas.support_index(offset, pupil)
    pidx = pupil.support_index
    pvals = pupil.values.ravel()[pidx]
    flat = canvas.spectrum.reshape(-1)

    psi = np.zeros(n * n, dtype=np.complex128)
    psi[pidx] = flat[gidx] * pvals
    est = ifft2(psi.reshape(n, n)) / canvas.gain
    mag = np.abs(est)
    denom = float(np.sum(amplitude * amplitude))
    residual = float(np.sum((mag - amplitude) ** 2)) / denom if denom > 0 else 0.0
    # zero-amplitude pixels take phase 0
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(mag > 0, est / mag, 1.0)
    updated = fft2(amplitude * unit) * canvas.gain
    flat[gidx] = updated.reshape(-1)[pidx] * np.conj(pvals)
    canvas.touched.add(tuple(offset))
    return residual


def update_step(canvas: SpectrumCanvas, frame: np.ndarray, wv: WaveVector,
                pupil: Pupil) -> float:
    """Project ``canvas`` onto one measured intensity ``frame`` (object units)."""
    if pupil.grid != frame.shape[0] or frame.shape[0] != frame.shape[1]:
        raise DomainError(f"frame {frame.shape} does not match pupil grid {pupil.grid}")
    amplitude = np.sqrt(np.maximum(frame, 0.0))
    return project(canvas, amplitude, spectrum_offset(wv, canvas.cfg), pupil)


def upsample_bilinear(image: np.ndarray, factor: int) -> np.ndarray:
    return ndimage.zoom(image, factor, order=1, mode="grid-wrap", grid_mode=True)


def initial_spectrum(on_axis_amplitude: np.ndarray, cfg: OpticalConfig) -> np.ndarray:
    return fft2(upsample_bilinear(on_axis_amplitude, cfg.upsample).astype(np.complex128))


def pick_init_led(frames: FrameSet, tile: TileSpec, cfg: OpticalConfig) -> tuple[int, int]:
    if frames.has(cfg.center_led):
        return tuple(cfg.center_led)
    ys, xs = tile.slices
    best = max(frames.leds, key=lambda led: float(frames.frame(led).image[ys, xs].mean()))
    warnings.warn(f"on-axis LED {cfg.center_led} missing; initialising from {best}",
                  stacklevel=3)
    return best


def init_canvas(frames: FrameSet, tile: TileSpec, cfg: OpticalConfig) -> SpectrumCanvas:
    """Upsampled on-axis amplitude with zero phase, transformed to the HR grid."""
    led = pick_init_led(frames, tile, cfg)
    amp = np.sqrt(frames.tile_stack(tile, [led])[0])
    return SpectrumCanvas(initial_spectrum(amp, cfg), cfg)


@dataclass
class TileProblem:
    """Everything needed to reconstruct one tile; picklable for worker processes.

    Frames travel as raw counts; amplitudes are derived on first use.
    """

    cfg: OpticalConfig
    tile: TileSpec
    leds: list[tuple[int, int]]
    offsets: list[tuple[int, int]]
    counts: np.ndarray              # (n, size, size) camera counts
    init_counts: np.ndarray         # on-axis (or fallback) tile frame
    scale: float = 1.0
    defocus: float = 0.0
    _pupil: Pupil | None = field(default=None, repr=False)
    _amplitudes: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_frames(cls, frames: FrameSet, tile: TileSpec, cfg: OpticalConfig,
                    seq: Sequence[tuple[int, int]], defocus: float | None = None) -> TileProblem:
        seq = [tuple(led) for led in seq]
        missing = [led for led in seq if not frames.has(led)]
        if missing:
            raise DataError(f"no frames for LEDs {missing[:5]}{'...' if len(missing) > 5 else ''}")
        ys, xs = tile.slices
        counts = np.stack([frames.frame(led).image[ys, xs] for led in seq])
        init = frames.frame(pick_init_led(frames, tile, cfg)).image[ys, xs].copy()
        dz = tile.defocus if defocus is None else defocus
        if dz is None:
            raise ConfigError(f"tile {tile.grid_pos} has no defocus value (auto search pending)")
        return cls(cfg, tile, seq, tile.offsets(seq, cfg), counts, init,
                   frames.intensity_scale, float(dz))

    @property
    def pupil(self) -> Pupil:
        if self._pupil is None:
            self._pupil = build_pupil(self.cfg, self.cfg.tile_size, self.defocus)
        return self._pupil

    @property
    def amplitudes(self) -> np.ndarray:
        if self._amplitudes is None:
            self._amplitudes = np.sqrt(self.counts / self.scale)
        return self._amplitudes

    def new_canvas(self) -> SpectrumCanvas:
        amp = np.sqrt(self.init_counts / self.scale)
        return SpectrumCanvas(initial_spectrum(amp, self.cfg), self.cfg)

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_pupil"] = None
        state["_amplitudes"] = None
        return state


def run_passes(problem: TileProblem, canvas: SpectrumCanvas, iters: int) -> list[float]:
    """Sequential passes over the LED order; returns per-pass mean residuals."""
    pupil = problem.pupil
    means = []
    for _ in range(iters):
        res = [project(canvas, problem.amplitudes[i], problem.offsets[i], pupil)
               for i in range(len(problem.leds))]
        means.append(float(np.mean(res)))
    return means


def solve(problem: TileProblem, iters: int) -> tuple[np.ndarray, dict]:
    if iters < 0:
        raise DomainError(f"iters must be >= 0, got {iters}")
    canvas = problem.new_canvas()
    residuals = run_passes(problem, canvas, iters)
    return canvas.field(), {"residuals": residuals, "iters": iters, "lag": None}


def reconstruct_tile(frames: FrameSet, tile: TileSpec, cfg: OpticalConfig, iters: int,
                     seq: Sequence[tuple[int, int]], schedule=None) -> tuple[np.ndarray, dict]:
    """HR complex field of ``tile`` after ``iters`` passes over ``seq``.

    With a :class:`~parfpm.pipeline.PipelineSchedule` the passes are
    executed in pipelined rounds instead; the result is identical.
    """
    if iters < 1:
        raise DomainError(f"iters must be >= 1, got {iters}")
    problem = TileProblem.from_frames(frames, tile, cfg, seq)
    if schedule is None:
        return solve(problem, iters)
    from .pipeline import solve_pipelined
    if schedule.stages != iters or schedule.length != len(problem.leds):
        raise ConfigError(f"schedule ({schedule.stages} stages x {schedule.length}) does not "
                          f"match iters={iters}, sequence length {len(problem.leds)}")
    return solve_pipelined(problem, schedule)


def amplitude_sharpness(field: np.ndarray) -> float:
    """Normalised gradient energy of the amplitude (larger is sharper)."""
    amp = np.abs(field)
    gy, gx = np.gradient(amp)
    return float(np.sum(gx * gx + gy * gy) / np.sum(amp) ** 2 * amp.size)


def search_defocus(frames: FrameSet, tile: TileSpec, cfg: OpticalConfig,
                   candidates: Sequence[float], iters: int = 2) -> float:
    """Brute-force defocus pick: the candidate whose brightfield-only
    reconstruction has the sharpest amplitude.

    A heuristic suited to amplitude-dominated samples; not a substitute
    for a calibrated refocusing method.
    """
    if not candidates:
        raise ConfigError("defocus search needs at least one candidate")
    bright = [led for led in cfg.scan_leds()
              if frames.has(led) and math.hypot(*tile.wavevector(led, cfg)) < cfg.cutoff]
    best, best_score = None, -np.inf
    for z in candidates:
        problem = TileProblem.from_frames(frames, tile, cfg, bright, defocus=z)
        hr, _ = solve(problem, iters)
        score = amplitude_sharpness(hr)
        if score > best_score:
            best, best_score = float(z), score
    return best
