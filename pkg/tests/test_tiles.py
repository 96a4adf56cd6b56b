from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parfpm.errors import ConfigError
from parfpm.optics import OpticalConfig
from parfpm.tiles import axis_origins, owned_bounds, partition_tiles

CFG = OpticalConfig()


def test_partition_2048():
    tiles = partition_tiles((2048, 2048), CFG)
    xs = sorted({t.origin[0] for t in tiles})
    assert xs == [0, 230, 460, 690, 920, 1150, 1380, 1610, 1792]
    assert len(tiles) == 81


def test_partition_single_tile():
    tiles = partition_tiles((256, 256), CFG)
    assert len(tiles) == 1 and tiles[0].origin == (0, 0)
    assert tiles[0].center == (0.0, 0.0)


def test_partition_486_pair():
    tiles = partition_tiles((486, 256), CFG)
    assert [t.origin for t in tiles] == [(0, 0), (230, 0)]


def test_partition_rejects_small_fov():
    with pytest.raises(ConfigError):
        partition_tiles((200, 256), CFG)


def test_partition_defocus_list():
    tiles = partition_tiles((486, 486), CFG, [0.0, 1.0, 2.0, 3.0])
    assert [t.defocus for t in tiles] == [0.0, 1.0, 2.0, 3.0]
    with pytest.raises(ConfigError):
        partition_tiles((486, 486), CFG, [0.0, 1.0])
    assert all(t.defocus is None for t in partition_tiles((486, 486), CFG, None))


@settings(max_examples=80, deadline=None)
@given(st.integers(32, 64), st.integers(0, 31), st.integers(0, 300), st.integers(0, 300))
def test_partition_coverage(size, overlap, extra_w, extra_h):
    overlap = min(overlap, size - 1)
    cfg = OpticalConfig(tile_size=size - size % 2, tile_overlap=min(overlap, size - size % 2 - 1))
    size = cfg.tile_size
    w, h = size + extra_w, size + extra_h
    tiles = partition_tiles((w, h), cfg)
    cover = np.zeros((h, w), dtype=int)
    for t in tiles:
        x0, y0 = t.origin
        assert 0 <= x0 <= w - size and 0 <= y0 <= h - size
        cover[t.slices] += 1
    assert cover.min() >= 1
    for origins, extent in ((axis_origins(w, size, cfg.tile_overlap), w),
                            (axis_origins(h, size, cfg.tile_overlap), h)):
        shared = [a + size - b for a, b in zip(origins, origins[1:])]
        assert all(s >= cfg.tile_overlap for s in shared)
        bounds = owned_bounds(origins, size, extent)
        assert bounds[0][0] == 0 and bounds[-1][1] == extent
        assert all(b0[1] == b1[0] for b0, b1 in zip(bounds, bounds[1:]))
        assert all(o <= lo < hi <= o + size for o, (lo, hi) in zip(origins, bounds))


def test_tile_wavevectors_follow_center():
    tiles = partition_tiles((486, 256), CFG)
    left, right = tiles
    led = CFG.center_led
    # a tile right of the axis sees the on-axis LED from its left: +fx
    assert left.wavevector(led, CFG).fx < 0 < right.wavevector(led, CFG).fx
