"""Complex mean-ratio stitching of overlapping HR tiles.

A pair is joined with a hard cut at the middle of the overlap; the
second image is first rescaled by mu1 / mu2, the ratio of the complex
means of the two images over their shared strip, which removes the
arbitrary global amplitude and phase each tile reconstruction carries.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .optics import OpticalConfig
from .tiles import TileSpec


@dataclass(frozen=True)
class StitchPlan:
    row: int            # extent of the first image along the stitch axis
    col: int            # extent of the first image across it
    overlap: int
    axis: str
    mu1: complex
    mu2: complex

    @property
    def cut(self) -> int:
        return self.row - self.overlap // 2

    @property
    def ratio(self) -> complex:
        return self.mu1 / self.mu2


def _axis_index(axis: str) -> int:
    if axis == "horizontal":
        return 1
    if axis == "vertical":
        return 0
    raise ConfigError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


def _strips(f1: np.ndarray, f2: np.ndarray, overlap: int, axis: str):
    ax = _axis_index(axis)
    if f1.shape[1 - ax] != f2.shape[1 - ax]:
        raise DataError(f"cross-axis sizes differ: {f1.shape} vs {f2.shape}")
    if overlap < 0 or overlap >= f1.shape[ax] or overlap >= f2.shape[ax]:
        raise DataError(f"overlap {overlap} must be below both extents "
                        f"({f1.shape[ax]}, {f2.shape[ax]})")
    if ax == 1:
        return f1[:, f1.shape[1] - overlap:], f2[:, :overlap]
    return f1[f1.shape[0] - overlap:, :], f2[:overlap, :]


def mean_ratio(f1: np.ndarray, f2: np.ndarray, overlap: int, axis: str) -> complex:
    """mu1 / mu2 over the trailing strip of ``f1`` and the leading strip of ``f2``."""
    s1, s2 = _strips(f1, f2, overlap, axis)
    if overlap == 0:
        raise DataError("mean ratio needs a non-empty overlap")
    mu1, mu2 = complex(s1.mean()), complex(s2.mean())
    if abs(mu2) < 1e-12:
        raise DataError("degenerate overlap: second image has ~zero mean on the shared strip")
    return mu1 / mu2


def plan_pair(f1: np.ndarray, f2: np.ndarray, overlap: int, axis: str) -> StitchPlan:
    ax = _axis_index(axis)
    s1, s2 = _strips(f1, f2, overlap, axis)
    mu1 = complex(s1.mean()) if overlap else 1.0
    mu2 = complex(s2.mean()) if overlap else 1.0
    if abs(mu2) < 1e-12:
        raise DataError("degenerate overlap: second image has ~zero mean on the shared strip")
    return StitchPlan(f1.shape[ax], f1.shape[1 - ax], overlap, axis, mu1, mu2)


def stitch_pair(f1: np.ndarray, f2: np.ndarray, overlap: int, axis: str = "horizontal") -> np.ndarray:
    """Join two images sharing ``overlap`` px along ``axis``.

    Output extent is ``len1 + len2 - overlap``. With ``overlap == 0`` the
    images are simply concatenated (nothing to match on).
    """
    plan = plan_pair(f1, f2, overlap, axis)
    ax = _axis_index(axis)
    start2 = plan.row - overlap
    cut = plan.cut
    scaled = f2 if overlap == 0 else f2 * plan.ratio
    if ax == 1:
        return np.concatenate([f1[:, :cut], scaled[:, cut - start2:]], axis=1)
    return np.concatenate([f1[:cut, :], scaled[cut - start2:, :]], axis=0)


def stitch_placed(items: Sequence[tuple[tuple[int, int], np.ndarray]]) -> np.ndarray:
    """Stitch images placed on a regular grid by their (x0, y0) origins.

    Origins are in output pixels. Each row is stitched left to right, then
    the row strips top to bottom; pairwise overlaps follow from the
    origins and image extents.
    """
    if not items:
        raise DataError("no tiles to stitch")
    xs = sorted({int(o[0]) for o, _ in items})
    ys = sorted({int(o[1]) for o, _ in items})
    grid: dict[tuple[int, int], np.ndarray] = {}
    for (x0, y0), f in items:
        key = (ys.index(int(y0)), xs.index(int(x0)))
        if key in grid:
            raise DataError(f"duplicate tile at origin {(x0, y0)}")
        grid[key] = f
    missing = [(ys[r], xs[c]) for r in range(len(ys)) for c in range(len(xs))
               if (r, c) not in grid]
    if missing:
        raise DataError(f"missing tiles at origins (y, x) {missing[:5]}")
    for (r, c), f in grid.items():
        h, w = f.shape
        if w != grid[(0, c)].shape[1] or h != grid[(r, 0)].shape[0]:
            raise DataError(f"tile at {(xs[c], ys[r])} has shape {f.shape}, inconsistent "
                            f"with its row and column")

    def overlap(origins, extent, i):
        ov = origins[i] + extent - origins[i + 1]
        if ov < 0:
            raise DataError(f"gap between tiles at {origins[i]} and {origins[i + 1]}")
        return ov

    strips = []
    for r in range(len(ys)):
        strip = grid[(r, 0)]
        for c in range(1, len(xs)):
            ov = overlap(xs, grid[(0, c - 1)].shape[1], c - 1)
            strip = stitch_pair(strip, grid[(r, c)], ov, "horizontal")
        strips.append(strip)
    out = strips[0]
    for r in range(1, len(ys)):
        ov = overlap(ys, grid[(r - 1, 0)].shape[0], r - 1)
        out = stitch_pair(out, strips[r], ov, "vertical")
    return out


def stitch_mosaic(tiles: Sequence[tuple[TileSpec, np.ndarray]], cfg: OpticalConfig) -> np.ndarray:
    """Stitch a partitioner grid: each row left to right, then rows top to bottom.

    Pairwise overlaps come from the tile origins (clamped edge tiles
    overlap more than ``tile_overlap``).
    """
    if not tiles:
        raise DataError("no tiles to stitch")
    up = cfg.upsample
    grid: dict[tuple[int, int], TileSpec] = {}
    for spec, f in tiles:
        if spec.grid_pos in grid:
            raise DataError(f"duplicate tile at grid position {spec.grid_pos}")
        if f.shape != (spec.size * up, spec.size * up):
            raise DataError(f"tile {spec.grid_pos} field shape {f.shape} != "
                            f"{(spec.size * up,) * 2}")
        grid[spec.grid_pos] = spec
    rows = 1 + max(r for r, _ in grid)
    cols = 1 + max(c for _, c in grid)
    missing = [(r, c) for r in range(rows) for c in range(cols) if (r, c) not in grid]
    if missing:
        raise DataError(f"missing tiles at {missing[:5]}")
    xs = [grid[(0, c)].origin[0] for c in range(cols)]
    ys = [grid[(r, 0)].origin[1] for r in range(rows)]
    for (r, c), spec in grid.items():
        if spec.origin != (xs[c], ys[r]):
            raise DataError(f"tile {(r, c)} origin {spec.origin} inconsistent with the grid")
    if any(b <= a for a, b in zip(xs, xs[1:])) or any(b <= a for a, b in zip(ys, ys[1:])):
        raise DataError("tile origins must increase along each axis")
    return stitch_placed([((s.origin[0] * up, s.origin[1] * up), f) for s, f in tiles])


def seam_positions(origins: Sequence[int], size: int, up: int) -> list[int]:
    """HR indices of the first pixel after each stitch cut along one axis."""
    seams = []
    for a, b in zip(origins, origins[1:]):
        ov = (a + size - b) * up
        seams.append((a + size) * up - ov // 2)
    return seams
