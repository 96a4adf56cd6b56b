from __future__ import annotations

import time

import numpy as np
import pytest

from parfpm.errors import ConfigError, DataError
from parfpm.forward import Frame, FrameSet, simulate_dataset, synth_object
from parfpm.orchestrate import (TIMING_COLUMNS, ReplayStream, bench, read_timing_csv,
                                run_offline, run_online, write_timing_csv)
from parfpm.recon import led_sequence
from parfpm.tiles import partition_tiles

from conftest import small_config


def max_diff(a, b):
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a.fields, b.fields))


def test_worker_count_invariance(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    one = run_offline(fs, cfg, 1, iters=2)
    two = run_offline(fs, cfg, 2, iters=2)
    assert len(one.tiles) == 4
    assert max_diff(one, two) <= 1e-10
    assert one.digest() == two.digest()


def test_pipelined_offline_matches(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    plain = run_offline(fs, cfg, 1, iters=2)
    piped = run_offline(fs, cfg, 1, iters=2, pipeline=True)
    assert piped.lag != "-"
    assert max_diff(plain, piped) <= 1e-10


def test_offline_argument_errors(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    with pytest.raises(ConfigError):
        run_offline(fs, cfg, 0)
    with pytest.raises(ConfigError):
        run_offline(fs, cfg, 1, iters=0)
    partial = FrameSet(fs.frames[:-1], cfg, fs.intensity_scale)
    with pytest.raises(DataError, match="incomplete"):
        run_offline(partial, cfg, 1)


def test_offline_defocus_search_fills_tiles():
    cfg = small_config(led_scan=(3, 3))
    fs = simulate_dataset(synth_object("bars", 256), cfg.scan_leds(), cfg)
    res = run_offline(fs, cfg, 1, defocus="auto", defocus_candidates=[0.0, 60.0])
    assert res.tiles[0].defocus == 0.0


@pytest.mark.parametrize("order", ["spiral", "raster"])
def test_online_equals_offline(toy_mosaic_frames, order):
    cfg, _ = toy_mosaic_frames
    seq = led_sequence(order, cfg.led_scan, cfg.center_led)
    fs = simulate_dataset(synth_object("composite", 480, seed=2), seq, cfg)
    offline = run_offline(fs, cfg, 1, iters=3, order=order)
    stream = ReplayStream.from_frameset(fs, delay=0.002)
    online = run_online(stream, cfg, 2, iters=3, intensity_scale=fs.intensity_scale)
    assert max_diff(offline, online) <= 1e-10
    assert online.extra["sequence"] == seq


def test_online_stub_updater_tracks_acquisition_time(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    stream = ReplayStream.from_frameset(fs, delay=0.05)
    res = run_online(stream, cfg, 1, iters=1, intensity_scale=fs.intensity_scale,
                     updater=lambda *a: 0.0)
    assert res.acquisition_s == pytest.approx(9 * 0.05)
    assert abs(res.wall_s - res.acquisition_s) <= 0.1 * res.acquisition_s + 0.05


def test_online_refuses_auto_defocus(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    tiles = partition_tiles(fs.fov, cfg, None)
    with pytest.raises(ConfigError):
        run_online(ReplayStream.from_frameset(fs, 0.001), cfg, tiles=tiles)


def test_online_without_on_axis_frame(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    frames = [f for f in fs.frames if f.led != cfg.center_led]
    stream = ReplayStream(frames, [0.001 * (i + 1) for i in range(len(frames))])
    with pytest.raises(DataError, match="never arrived"):
        run_online(stream, cfg, intensity_scale=fs.intensity_scale)


def test_stream_stall_raises():
    img = np.zeros((4, 4), np.uint16)
    stream = ReplayStream([Frame((0, 0), img, 0.0), Frame((0, 1), img, 0.0)], [0.0, 5.0],
                          timeout=0.2)
    it = iter(stream)
    next(it)
    t0 = time.perf_counter()
    with pytest.raises(DataError, match="stalled"):
        next(it)
    assert time.perf_counter() - t0 < 2.0


def test_stream_rescales_to_delay(toy_mosaic_frames):
    _, fs = toy_mosaic_frames
    stream = ReplayStream.from_frameset(fs, delay=0.5)
    np.testing.assert_allclose(stream.times, 0.5 * np.arange(1, len(fs) + 1))
    native = ReplayStream.from_frameset(fs)
    np.testing.assert_allclose(native.times, 0.33 * np.arange(1, len(fs) + 1))


def test_stream_rejects_bad_times():
    img = np.zeros((2, 2), np.uint16)
    with pytest.raises(ConfigError):
        ReplayStream([Frame((0, 0), img, 0.0)], [])
    with pytest.raises(ConfigError):
        ReplayStream([Frame((0, 0), img, 0.0), Frame((0, 1), img, 0.0)], [1.0, 0.5])


def test_timing_csv_round_trip(tmp_path, toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    res = run_offline(fs, cfg, 1)
    row = res.timing_row("r1")
    assert list(row) == TIMING_COLUMNS
    write_timing_csv(tmp_path / "t.csv", [row])
    write_timing_csv(tmp_path / "t.csv", [res.timing_row("r2")], append=True)
    rows = read_timing_csv(tmp_path / "t.csv")
    assert [r["run_id"] for r in rows] == ["r1", "r2"]
    assert rows[0]["tiles"] == "4" and rows[0]["mode"] == "offline"


def test_bench_grid(toy_mosaic_frames):
    cfg, fs = toy_mosaic_frames
    rows, summary = bench(fs, cfg, [1, 2], [1, 4])
    assert [(r["workers"], r["tiles"]) for r in rows] == [(1, 1), (1, 4), (2, 1), (2, 4)]
    assert summary["max_abs_diff_across_workers"] <= 1e-10
    assert summary["speedup"]["w1-t4"] == 1.0
    assert summary["digests"]["w1-t4"] == summary["digests"]["w2-t4"]
    with pytest.raises(ConfigError):
        bench(fs, cfg, [1], [5])
