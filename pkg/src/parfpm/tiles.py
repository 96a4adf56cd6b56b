"""Spatial partition of the field of view into overlapping tiles."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .optics import OpticalConfig, WaveVector, illumination_wavevector, spectrum_offset


@dataclass(frozen=True)
class TileSpec:
    """One square sub-region of the camera frame.

    ``defocus`` is in µm; ``None`` means "to be found by the defocus search".
    """

    origin: tuple[int, int]            # (x0, y0) camera px
    size: int
    center: tuple[float, float]        # (x, y) µm from the optical axis
    grid_pos: tuple[int, int]          # (row, col) in the tile grid
    defocus: float | None = 0.0
    wavevectors: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def slices(self) -> tuple[slice, slice]:
        x0, y0 = self.origin
        return slice(y0, y0 + self.size), slice(x0, x0 + self.size)

    def offsets(self, leds: Sequence[tuple[int, int]], cfg: OpticalConfig) -> list[tuple[int, int]]:
        return [spectrum_offset(self.wavevector(led, cfg), cfg) for led in leds]

    def wavevector(self, led: tuple[int, int], cfg: OpticalConfig) -> WaveVector:
        wv = self.wavevectors.get(tuple(led))
        if wv is None:
            wv = illumination_wavevector(tuple(led), self.center, cfg)
        return wv

    def with_defocus(self, defocus: float | None) -> TileSpec:
        return replace(self, defocus=defocus)


def axis_origins(extent: int, size: int, overlap: int) -> list[int]:
    stride = size - overlap
    origins = list(range(0, extent - size + 1, stride))
    if origins[-1] + size < extent:
        origins.append(extent - size)
    return origins


def partition_tiles(fov: tuple[int, int], cfg: OpticalConfig,
                    defocus: float | Sequence[float | None] | None = 0.0) -> list[TileSpec]:
    """Row-major grid of tiles covering ``fov`` = (width, height) camera px.

    Origins step by ``tile_size - tile_overlap``; a last tile that would
    overshoot is clamped to the far edge, so its overlap is larger.
    """
    w, h = fov
    size = cfg.tile_size
    if w < size or h < size:
        raise ConfigError(f"field of view {fov} is smaller than one {size}px tile")
    xs = axis_origins(w, size, cfg.tile_overlap)
    ys = axis_origins(h, size, cfg.tile_overlap)
    n = len(xs) * len(ys)
    if defocus is None or np.isscalar(defocus):
        per_tile = [defocus] * n
    else:
        per_tile = list(defocus)
        if len(per_tile) != n:
            raise ConfigError(f"got {len(per_tile)} defocus values for {n} tiles")
    leds = cfg.scan_leds()
    tiles = []
    for r, y0 in enumerate(ys):
        for c, x0 in enumerate(xs):
            center = ((x0 + size / 2 - w / 2) * cfg.dx_obj,
                      (y0 + size / 2 - h / 2) * cfg.dx_obj)
            wvs = {led: illumination_wavevector(led, center, cfg) for led in leds}
            dz = per_tile[len(tiles)]
            tiles.append(TileSpec((x0, y0), size, center, (r, c),
                                  None if dz is None else float(dz), wvs))
    return tiles


def grid_shape(tiles: Sequence[TileSpec]) -> tuple[int, int]:
    rows = 1 + max(t.grid_pos[0] for t in tiles)
    cols = 1 + max(t.grid_pos[1] for t in tiles)
    return rows, cols


def owned_bounds(origins: Sequence[int], size: int, extent: int) -> list[tuple[int, int]]:
    """Per-tile [start, stop) along one axis, cutting every overlap at its midline."""
    bounds = []
    for i, o in enumerate(origins):
        start = 0 if i == 0 else origins[i - 1] + size - (origins[i - 1] + size - o) // 2
        bounds.append(start)
    stops = bounds[1:] + [extent]
    return list(zip(bounds, stops))
