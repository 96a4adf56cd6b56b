from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parfpm.errors import ConfigError, UnsafeLagError
from parfpm.optics import WaveVector
from parfpm.pipeline import (PipelineSchedule, min_safe_lag, min_safe_lag_offsets,
                             offsets_conflict, pipelined_reconstruct_tile)
from parfpm.recon import led_sequence, reconstruct_tile
from parfpm.tiles import partition_tiles

from conftest import small_config


def brute_force_lag(offsets, radius):
    worst = 0
    for i in range(len(offsets)):
        for j in range(i, len(offsets)):
            d = math.dist(offsets[i], offsets[j])
            if d <= 2 * radius:
                worst = max(worst, j - i)
    return worst + 1


def test_touching_disks_conflict():
    assert offsets_conflict((0, 0), (0, 20), 10.0)
    assert not offsets_conflict((0, 0), (0, 21), 10.0)


def test_identical_wavevectors_allow_no_pipelining():
    cfg = small_config(led_scan=(3, 3))
    seq = cfg.scan_leds()
    wvs = {led: WaveVector(0.0, 0.0) for led in seq}
    assert min_safe_lag(seq, wvs, 14.6, cfg) == len(seq)


def test_line_spaced_three_radii_is_lag_one():
    offsets = [(0, 3 * 10 * k) for k in range(5)]
    assert min_safe_lag_offsets(offsets, 10.0) == 1


def test_raster_3x3_four_neighbours_is_lag_four():
    # spacing 10, radius 6: 2r = 12 covers 4-neighbours but not diagonals
    offsets = [(10 * r, 10 * c) for r in range(3) for c in range(3)]
    assert min_safe_lag_offsets(offsets, 6.0) == 4


def test_empty_sequence_rejected():
    with pytest.raises(ConfigError):
        min_safe_lag_offsets([], 5.0)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-60, 60), st.integers(-60, 60)), min_size=1,
                max_size=25),
       st.floats(0.5, 30.0))
def test_min_safe_lag_matches_brute_force(offsets, radius):
    assert min_safe_lag_offsets(offsets, radius) == brute_force_lag(offsets, radius)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(1, 5), st.integers(1, 35))
def test_schedule_layout(length, stages, lag):
    sched = PipelineSchedule.build(length, stages, lag)
    seen = {}
    for r, entries in enumerate(sched.rounds):
        for s, p in entries:
            seen[(s, p)] = r
    assert set(seen) == {(s, p) for s in range(stages) for p in range(length)}
    # stage s runs position p at round p + s * lag (empty rounds are dropped)
    order = sorted(seen, key=lambda k: (k[0] * lag + k[1]))
    assert sorted(seen, key=seen.get) == order


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-40, 40), st.integers(-40, 40)), min_size=1,
                max_size=25),
       st.floats(1.0, 20.0), st.integers(1, 4))
def test_safe_lag_gives_disjoint_rounds(offsets, radius, stages):
    lag = min_safe_lag_offsets(offsets, radius)
    sched = PipelineSchedule.build(len(offsets), stages, lag)
    assert sched.is_safe(offsets, radius)


def test_schedule_rejects_bad_lag():
    with pytest.raises(ConfigError):
        PipelineSchedule.build(5, 2, 0)


def _setup(frames, cfg, order="spiral"):
    tile = partition_tiles(frames.fov, cfg)[0]
    return tile, led_sequence(order, cfg.led_scan, cfg.center_led)


def test_lag_equal_length_is_sequential(toy_frames, toy_cfg):
    tile, seq = _setup(toy_frames, toy_cfg)
    a, _ = reconstruct_tile(toy_frames, tile, toy_cfg, 2, seq)
    b, m = pipelined_reconstruct_tile(toy_frames, tile, toy_cfg, 2, seq, lag=len(seq))
    np.testing.assert_array_equal(a, b)
    assert m["lag"] == len(seq)


@pytest.mark.parametrize("order", ["spiral", "raster"])
def test_auto_lag_matches_sequential(order):
    cfg = small_config(led_scan=(3, 3))
    from parfpm.forward import simulate_dataset, synth_object
    fs = simulate_dataset(synth_object("composite", 256, seed=1),
                          led_sequence(order, cfg.led_scan, cfg.center_led), cfg)
    tile, seq = _setup(fs, cfg, order)
    a, _ = reconstruct_tile(fs, tile, cfg, 3, seq)
    b, _ = pipelined_reconstruct_tile(fs, tile, cfg, 3, seq, lag="auto")
    assert np.max(np.abs(a - b)) <= 1e-10


def test_single_stage_ignores_lag(toy_frames, toy_cfg):
    tile, seq = _setup(toy_frames, toy_cfg)
    a, _ = reconstruct_tile(toy_frames, tile, toy_cfg, 1, seq)
    b, _ = pipelined_reconstruct_tile(toy_frames, tile, toy_cfg, 1, seq, lag=len(seq))
    np.testing.assert_array_equal(a, b)


def test_real_pipelining_with_wide_scan():
    # with a 6 mm pitch only LEDs within about three pitches share spectrum
    cfg = small_config(led_scan=(9, 9), led_pitch=6.0)
    from parfpm.forward import simulate_dataset, synth_object
    seq = led_sequence("spiral", cfg.led_scan, cfg.center_led)
    fs = simulate_dataset(synth_object("composite", 256, seed=4), seq, cfg)
    tile = partition_tiles(fs.fov, cfg)[0]
    a, _ = reconstruct_tile(fs, tile, cfg, 3, seq)
    b, m = pipelined_reconstruct_tile(fs, tile, cfg, 3, seq, threads=3)
    assert m["lag"] < len(seq)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_unsafe_lag_refused_with_minimum(toy_frames, toy_cfg):
    tile, seq = _setup(toy_frames, toy_cfg)
    with pytest.raises(UnsafeLagError) as info:
        pipelined_reconstruct_tile(toy_frames, tile, toy_cfg, 2, seq, lag=1)
    assert info.value.minimum > 1 and str(info.value.minimum) in str(info.value)
    _, m = pipelined_reconstruct_tile(toy_frames, tile, toy_cfg, 2, seq, lag=1, unsafe=True)
    assert m["nondeterministic"] is True
