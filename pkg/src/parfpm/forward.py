"""Synthetic objects and the forward model producing LR intensity stacks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, DomainError
from .optics import (OpticalConfig, Pupil, WaveVector, as_field, build_pupil, fft2,
                     ifft2, spectrum_offset)
from .tiles import TileSpec, owned_bounds, partition_tiles

FULL_SCALE = 65535
PEAK_FRACTION = 0.8


class Frame(NamedTuple):
    led: tuple[int, int]
    image: np.ndarray   # uint16, (height, width)
    timestamp: float


@dataclass
class FrameSet:
    """LR intensity frames with their LED identities.

    ``intensity_scale`` converts object-unit intensity to camera counts
    (counts = scale * |field|^2).
    """

    frames: list[Frame]
    cfg: OpticalConfig
    intensity_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames:
            shape = self.frames[0].image.shape
            if any(f.image.shape != shape for f in self.frames):
                raise DataError("frames differ in dimensions")
        leds = [tuple(f.led) for f in self.frames]
        if len(set(leds)) != len(leds):
            raise DataError("an LED appears more than once in the frame set")
        self._by_led = {tuple(f.led): f for f in self.frames}

    def __len__(self):
        return len(self.frames)

    @property
    def fov(self) -> tuple[int, int]:
        h, w = self.frames[0].image.shape
        return w, h

    @property
    def leds(self) -> list[tuple[int, int]]:
        return [tuple(f.led) for f in self.frames]

    def frame(self, led) -> Frame:
        try:
            return self._by_led[tuple(led)]
        except KeyError:
            raise DataError(f"no frame for LED {tuple(led)}") from None

    def has(self, led) -> bool:
        return tuple(led) in self._by_led

    @property
    def complete(self) -> bool:
        return set(self.cfg.scan_leds()) <= set(self._by_led)

    def tile_stack(self, tile: TileSpec, leds: Sequence[tuple[int, int]]) -> np.ndarray:
        """Object-unit intensities of ``tile`` for each LED, shape (n, size, size)."""
        ys, xs = tile.slices
        stack = np.empty((len(leds), tile.size, tile.size))
        for i, led in enumerate(leds):
            stack[i] = self.frame(led).image[ys, xs]
        stack /= self.intensity_scale
        return stack


# --- synthetic objects -----------------------------------------------------

def bar_periods(size: int) -> list[int]:
    """Bar periods in HR px: 4, 8, ... doubling up to ``size // 16``."""
    periods = []
    p = 4
    while p <= size // 16:
        periods.append(p)
        p *= 2
    return periods


def bar_groups(size: int) -> list[dict]:
    """Layout of the three-bar groups of the ``bars`` object.

    Each entry: period, orientation ('v' bars vary along x, 'h' along y),
    and the bounding box (y0, x0, height, width) in HR px.
    """
    groups = []
    margin = size // 16
    y = margin
    for p in reversed(bar_periods(size)):
        span = 5 * p // 2          # three bars plus two gaps, bar width p/2
        groups.append({"period": p, "orient": "v", "box": (y, margin, span, span)})
        groups.append({"period": p, "orient": "h", "box": (y, margin + span + margin, span, span)})
        y += span + max(margin // 2, p)
    return groups


def _bars_amplitude(size: int) -> np.ndarray:
    amp = np.ones((size, size))
    for g in bar_groups(size):
        y0, x0, hh, ww = g["box"]
        half = g["period"] // 2
        for k in range(3):
            s = k * g["period"]
            if g["orient"] == "v":
                amp[y0:y0 + hh, x0 + s:x0 + s + half] = 0.1
            else:
                amp[y0 + s:y0 + s + half, x0:x0 + ww] = 0.1
    return amp


def _smooth_field(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth random field normalised to [-1, 1]."""
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    f -= f.mean()
    return f / np.abs(f).max()


def synth_object(kind: str, size: int | tuple[int, int], seed: int = 0) -> np.ndarray:
    """Ground-truth complex object with amplitude in [0.1, 1].

    Kinds: ``phase-disk`` (pi/2 disk of radius n/8 on unit amplitude),
    ``bars`` (amplitude three-bar groups), ``composite`` (smooth amplitude
    and phase plus soft bars in one quadrant) and ``smooth`` (fine smooth
    texture on a gentle linear phase wedge, as a tilted substrate gives).

    ``size`` is the side in HR px or an (height, width) pair; non-square
    objects are cut from the top-left of a square one.
    """
    h, w = (size, size) if np.isscalar(size) else size
    n = max(h, w)
    if kind == "phase-disk":
        idx = np.arange(n) - n / 2 + 0.5
        r = np.hypot(idx[:, None], idx[None, :])
        obj = np.where(r <= n / 8, np.exp(1j * np.pi / 2), 1.0 + 0j)
    elif kind == "bars":
        obj = _bars_amplitude(n).astype(np.complex128)
    elif kind == "composite":
        rng = np.random.default_rng(seed)
        amp = 0.6 + 0.35 * _smooth_field((n, n), n / 128, rng)
        phase = 1.0 * _smooth_field((n, n), n / 96, rng)
        # a soft-edged bar target in one corner keeps some fine structure
        bars = ndimage.gaussian_filter(_bars_amplitude(n // 2), 2.0)
        amp[: n // 2, : n // 2] *= 0.4 + 0.6 * bars
        amp = np.clip(amp, 0.1, 1.0)
        obj = amp * np.exp(1j * np.clip(phase, -np.pi / 2, np.pi / 2))
    elif kind == "smooth":
        rng = np.random.default_rng(seed)
        amp = 0.75 + 0.15 * _smooth_field((n, n), 12.0, rng)
        phase = 0.5 * _smooth_field((n, n), 12.0, rng)
        # gentle substrate wedge, 1 rad per 1800 HR px along each axis
        idx = (np.arange(n) - n / 2) / 1800.0
        phase = phase + idx[:, None] + idx[None, :]
        obj = amp * np.exp(1j * np.clip(phase, -np.pi / 2, np.pi / 2))
    else:
        raise DomainError(f"unknown object kind {kind!r}")
    return np.ascontiguousarray(obj[:h, :w])


# --- forward model ---------------------------------------------------------

def extract_block(spectrum: np.ndarray, offset: tuple[int, int], n: int) -> tuple[slice, slice]:
    """Slices of the n x n block of a centered spectrum centered at DC + offset."""
    big = spectrum.shape[0]
    r0 = big // 2 + offset[0] - n // 2
    c0 = big // 2 + offset[1] - n // 2
    if r0 < 0 or c0 < 0 or r0 + n > spectrum.shape[0] or c0 + n > spectrum.shape[1]:
        raise ConfigError(f"illumination NA too high for upsample factor "
                          f"(spectrum offset {offset} leaves the {big}px HR spectrum)")
    return slice(r0, r0 + n), slice(c0, c0 + n)


def lr_field(spectrum: np.ndarray, offset: tuple[int, int], pupil: Pupil) -> np.ndarray:
    """LR complex field at the camera for one spectrum offset (object units)."""
    n = pupil.grid
    gain = spectrum.shape[0] / n
    rs, cs = extract_block(spectrum, offset, n)
    return ifft2(spectrum[rs, cs] * pupil.values) / gain


def quantize(counts: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(counts + 0.5), 0, FULL_SCALE).astype(np.uint16)


def apply_noise(counts: np.ndarray, photons: float, rng: np.random.Generator) -> np.ndarray:
    """Scaled Poisson noise; ``photons`` is the photon count at the reference peak."""
    per_count = photons / (PEAK_FRACTION * FULL_SCALE)
    return rng.poisson(np.maximum(counts, 0) * per_count) / per_count


def simulate_frame(object_hr: np.ndarray, wv: WaveVector, pupil: Pupil, cfg: OpticalConfig,
                   *, scale: float | None = None, photons: float | None = None,
                   rng: np.random.Generator | None = None, quantized: bool = True) -> np.ndarray:
    """Camera frame of one tile-sized object under plane-wave illumination ``wv``.

    Without ``scale`` the counts are anchored so that the on-axis frame of
    the same object peaks at 80% of full scale.
    """
    obj = as_field(object_hr)
    side = cfg.tile_size * cfg.upsample
    if obj.shape != (side, side):
        raise DomainError(f"object must be {side}x{side} for one tile, got {obj.shape}")
    if pupil.grid != cfg.tile_size:
        raise DomainError(f"pupil grid {pupil.grid} != tile size {cfg.tile_size}")
    spectrum = fft2(obj)
    intensity = np.abs(lr_field(spectrum, spectrum_offset(wv, cfg), pupil)) ** 2
    if scale is None:
        on_axis = np.abs(lr_field(spectrum, (0, 0), pupil)) ** 2
        scale = PEAK_FRACTION * FULL_SCALE / on_axis.max()
    counts = intensity * scale
    if photons is not None:
        counts = apply_noise(counts, photons, rng or np.random.default_rng(0))
    return quantize(counts) if quantized else counts


def parse_noise(noise) -> float | None:
    """'off' / None -> None; 'photons=K' or a number -> K."""
    if noise is None or noise == "off":
        return None
    if isinstance(noise, (int, float)):
        return float(noise)
    if isinstance(noise, str) and noise.startswith("photons="):
        k = float(noise.split("=", 1)[1])
        if k <= 0:
            raise ConfigError(f"photon budget must be positive, got {k}")
        return k
    raise ConfigError(f"unrecognised noise spec {noise!r}; use 'off' or 'photons=K'")


def _padded_patch(obj: np.ndarray, tile: TileSpec, margin: int, up: int) -> np.ndarray:
    """HR patch of ``tile`` grown by ``margin`` LR px, wrapping at the FOV border."""
    x0, y0 = tile.origin
    rows = np.arange((y0 - margin) * up, (y0 + tile.size + margin) * up) % obj.shape[0]
    cols = np.arange((x0 - margin) * up, (x0 + tile.size + margin) * up) % obj.shape[1]
    return obj[np.ix_(rows, cols)]


def simulate_dataset(obj: np.ndarray, seq: Sequence[tuple[int, int]], cfg: OpticalConfig,
                     noise=None, *, seed: int = 0,
                     defocus: float | Sequence[float] = 0.0) -> FrameSet:
    """Simulate the frame for every LED of ``seq`` (acquisition order).

    The object covers the whole field of view at HR sampling. Each tile of
    the partition is simulated with its own illumination angles and
    defocus on a grid padded by half a tile on every side, so tile edges
    see their true surroundings rather than a periodic wrap; every camera
    pixel is then taken from the tile owning it (overlaps are cut at their
    midlines). For a one-tile field of view this reduces to
    :func:`simulate_frame`.
    """
    obj = as_field(obj)
    up = cfg.upsample
    if obj.shape[0] % up or obj.shape[1] % up:
        raise DomainError(f"object shape {obj.shape} not divisible by upsample {up}")
    fov = (obj.shape[1] // up, obj.shape[0] // up)
    photons = parse_noise(noise)
    tiles = partition_tiles(fov, cfg, defocus)
    xs = sorted({t.origin[0] for t in tiles})
    ys = sorted({t.origin[1] for t in tiles})
    own_x = dict(zip(xs, owned_bounds(xs, cfg.tile_size, fov[0])))
    own_y = dict(zip(ys, owned_bounds(ys, cfg.tile_size, fov[1])))
    seq = [tuple(led) for led in seq]
    n = cfg.tile_size
    margin = n // 2
    pupils = {}
    for t in tiles:
        if t.defocus not in pupils:
            pupils[t.defocus] = build_pupil(cfg, 2 * n, t.defocus)

    def tile_frame(t: TileSpec, spectrum: np.ndarray, led) -> np.ndarray:
        # padded grid has half the frequency step: double the tile-grid offset
        r, c = spectrum_offset(t.wavevector(led, cfg), cfg)
        f = lr_field(spectrum, (2 * r, 2 * c), pupils[t.defocus])
        return np.abs(f[margin:margin + n, margin:margin + n]) ** 2

    # anchor the count scale on the brightest on-axis tile frame
    peak = 0.0
    for t in tiles:
        spectrum = fft2(_padded_patch(obj, t, margin, up))
        peak = max(peak, float(tile_frame(t, spectrum, cfg.center_led).max()))
    scale = PEAK_FRACTION * FULL_SCALE / peak

    images = np.empty((len(seq), fov[1], fov[0]), dtype=np.uint16)
    for ti, t in enumerate(tiles):
        spectrum = fft2(_padded_patch(obj, t, margin, up))
        (ox0, ox1), (oy0, oy1) = own_x[t.origin[0]], own_y[t.origin[1]]
        x0, y0 = t.origin
        for k, led in enumerate(seq):
            counts = tile_frame(t, spectrum, led)[oy0 - y0:oy1 - y0, ox0 - x0:ox1 - x0] * scale
            if photons is not None:
                rng = np.random.default_rng([seed, k, ti])
                counts = apply_noise(counts, photons, rng)
            images[k, oy0:oy1, ox0:ox1] = quantize(counts)
    period = cfg.acq_pattern_delay + cfg.acq_exposure
    frames = [Frame(led, images[k], (k + 1) * period) for k, led in enumerate(seq)]
    return FrameSet(frames, cfg, scale, {"fov": list(fov)})
