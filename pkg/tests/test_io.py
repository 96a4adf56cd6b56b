from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from parfpm.errors import ConfigError, DataError
from parfpm.forward import simulate_dataset, synth_object
from parfpm.io import (Config, RunOptions, export_view, import_view, load_dataset, read_cfi,
                       read_config, read_frame, write_cfi, write_config, write_dataset,
                       write_frame)
from parfpm.optics import OpticalConfig

from conftest import small_config


def test_pgm_payload_bytes(tmp_path):
    p = tmp_path / "f.pgm"
    write_frame(p, np.array([[0, 1], [65535, 256]], dtype=np.uint16))
    data = p.read_bytes()
    assert data.startswith(b"P5\n2 2\n65535\n")
    assert data[-8:] == bytes.fromhex("00 00 00 01 FF FF 01 00")


@settings(max_examples=30, deadline=None,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2 ** 32 - 1))
def test_pgm_round_trip(tmp_path, w, h, seed):
    img = np.random.default_rng(seed).integers(0, 65536, (h, w), dtype=np.uint16)
    write_frame(tmp_path / "r.pgm", img)
    np.testing.assert_array_equal(read_frame(tmp_path / "r.pgm"), img)


def test_pgm_truncated_names_lengths(tmp_path):
    p = tmp_path / "t.pgm"
    write_frame(p, np.zeros((3, 4), np.uint16))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(DataError, match="23 bytes, expected 24"):
        read_frame(p)


def test_pgm_header_errors(tmp_path):
    p = tmp_path / "h.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(DataError, match="maxval"):
        read_frame(p)
    p.write_bytes(b"P2\n2 2\n65535\n" + bytes(8))
    with pytest.raises(DataError, match="binary PGM"):
        read_frame(p)
    p.write_bytes(b"P5\n2")
    with pytest.raises(DataError, match="malformed"):
        read_frame(p)


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n1 1\n65535\n\x12\x34")
    assert read_frame(p)[0, 0] == 0x1234


def test_cfi_one_pixel_layout(tmp_path):
    p = tmp_path / "one.cfi"
    write_cfi(p, np.array([[1 + 2j]]))
    data = p.read_bytes()
    assert len(data) == 28
    assert data[:4] == b"CFI1"
    assert data[4:12] == (1).to_bytes(4, "little") * 2
    assert np.frombuffer(data[12:], "<f8").tolist() == [1.0, 2.0]


def test_cfi_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    f = rng.standard_normal((64, 48)) + 1j * rng.standard_normal((64, 48))
    write_cfi(tmp_path / "r.cfi", f)
    g = read_cfi(tmp_path / "r.cfi")
    assert g.shape == (64, 48)
    assert g.tobytes() == f.tobytes()


def test_cfi_rejects_nan_with_coordinates(tmp_path):
    f = np.ones((4, 5), complex)
    f[2, 3] = complex(np.nan, 0)
    with pytest.raises(DataError, match=r"x=3, y=2"):
        write_cfi(tmp_path / "n.cfi", f)


def test_cfi_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "b.cfi"
    write_cfi(p, np.ones((2, 2), complex))
    data = p.read_bytes()
    p.write_bytes(b"CFI2" + data[4:])
    with pytest.raises(DataError, match="magic"):
        read_cfi(p)
    p.write_bytes(data[:-3])
    with pytest.raises(DataError, match="expected 64"):
        read_cfi(p)


def test_export_zero_field(tmp_path):
    export_view(np.zeros((4, 4), complex), "amplitude", tmp_path / "z.pgm")
    assert not read_frame(tmp_path / "z.pgm").any()


def test_export_constant_amplitude_is_mid_gray(tmp_path):
    export_view(np.full((3, 3), 0.7 + 0j), "amplitude", tmp_path / "c.pgm")
    assert (read_frame(tmp_path / "c.pgm") == 32768).all()
    np.testing.assert_allclose(import_view(tmp_path / "c.pgm"), 0.7)


def test_export_phase_endpoints(tmp_path):
    # angle(-1 - 0j) is exactly -pi
    export_view(np.full((2, 2), complex(-1.0, -0.0)), "phase", tmp_path / "lo.pgm")
    assert (read_frame(tmp_path / "lo.pgm") == 0).all()
    export_view(np.full((2, 2), np.exp(1j * (math.pi - 1e-9))), "phase", tmp_path / "hi.pgm")
    assert (read_frame(tmp_path / "hi.pgm") >= 65534).all()


@pytest.mark.parametrize("which", ["amplitude", "phase"])
def test_export_reimport_within_one_step(tmp_path, which):
    f = synth_object("composite", 64, seed=2)
    m = export_view(f, which, tmp_path / "v.pgm")
    back = import_view(tmp_path / "v.pgm")
    ref = np.abs(f) if which == "amplitude" else np.angle(f)
    step = (m["high"] - m["low"]) / m["levels"]
    assert np.max(np.abs(back - ref)) <= step
    assert (tmp_path / "v.pgm.txt").exists()


def test_export_unknown_view(tmp_path):
    with pytest.raises(ConfigError):
        export_view(np.ones((2, 2)), "real", tmp_path / "x.pgm")


def test_default_config_round_trip(tmp_path):
    write_config(tmp_path / "c.json", Config())
    back = read_config(tmp_path / "c.json")
    assert back == Config()
    doc = json.loads((tmp_path / "c.json").read_text())
    # every default is materialised
    assert set(doc["optics"]) == set(OpticalConfig.field_names())


def test_reference_defaults_load(tmp_path):
    write_config(tmp_path / "c.json", Config())
    cfg = read_config(tmp_path / "c.json").optics
    assert (cfg.led_height, cfg.led_pitch, cfg.objective_na, cfg.magnification,
            cfg.camera_pixel, cfg.tile_size, cfg.tile_overlap, cfg.led_scan) == \
        (83.0, 2.5, 0.1, 2.0, 2.4, 256, 26, (13, 13))


def _doc():
    return Config().to_dict()


def test_config_overlap_rejected_with_invariant_name():
    doc = _doc()
    doc["optics"]["tile_overlap"] = 256
    with pytest.raises(ConfigError, match="tile_overlap"):
        Config.from_dict(doc)


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d.update(extra=1), "unknown config keys"),
    (lambda d: d["optics"].update(wavelenght=0.5), "unknown optics keys"),
    (lambda d: d["optics"].pop("led_height"), "missing required optics keys"),
    (lambda d: d["run"].update(itres=3), "unknown run keys"),
    (lambda d: d["run"].update(iters=0), "iters"),
    (lambda d: d["run"].update(lag="fast"), "lag"),
    (lambda d: d.update(format_version="9"), "format_version"),
    (lambda d: d.pop("optics"), "optics"),
])
def test_config_strict(mutate, msg):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ConfigError, match=msg):
        Config.from_dict(doc)


def test_config_invalid_json(tmp_path):
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError):
        read_config(tmp_path / "bad.json")


def test_run_options_defocus_auto_needs_candidates():
    with pytest.raises(ConfigError, match="defocus_candidates"):
        RunOptions(defocus="auto").validate(OpticalConfig())
    assert RunOptions(defocus="auto", defocus_candidates=[0.0]).tile_defocus() is None


def _dataset(tmp_path):
    cfg = small_config(led_scan=(3, 3))
    obj = synth_object("composite", 256, seed=1)
    fs = simulate_dataset(obj, cfg.scan_leds(), cfg)
    config = Config(cfg, RunOptions(fov=[64, 64]))
    write_dataset(tmp_path / "ds", fs, config, obj)
    return fs, obj, config


def test_dataset_round_trip(tmp_path):
    fs, obj, config = _dataset(tmp_path)
    ds = load_dataset(tmp_path / "ds")
    assert ds.config == config
    assert ds.truth.tobytes() == obj.tobytes()
    assert ds.frames.intensity_scale == fs.intensity_scale
    for a, b in zip(fs.frames, ds.frames.frames):
        assert a.led == b.led and a.timestamp == b.timestamp
        np.testing.assert_array_equal(a.image, b.image)
    m = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert m["format_version"] == "1" and m["object_truth"] == "truth.cfi"
    assert set(m["frames"][0]) == {"file", "led_row", "led_col", "timestamp_s"}


def test_dataset_missing_frame_file(tmp_path):
    _dataset(tmp_path)
    m = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    (tmp_path / "ds" / m["frames"][0]["file"]).unlink()
    with pytest.raises(DataError, match="does not exist"):
        load_dataset(tmp_path / "ds")


def test_dataset_led_outside_grid(tmp_path):
    _dataset(tmp_path)
    path = tmp_path / "ds" / "manifest.json"
    m = json.loads(path.read_text())
    m["frames"][0]["led_row"] = 99
    path.write_text(json.dumps(m))
    with pytest.raises(DataError, match="outside"):
        load_dataset(tmp_path / "ds")


def test_dataset_version_and_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)
    _dataset(tmp_path)
    path = tmp_path / "ds" / "manifest.json"
    m = json.loads(path.read_text())
    m["format_version"] = "0"
    path.write_text(json.dumps(m))
    with pytest.raises(DataError, match="format_version"):
        load_dataset(tmp_path / "ds")
