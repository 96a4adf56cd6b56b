from __future__ import annotations

import numpy as np
import pytest

from parfpm.forward import simulate_dataset, synth_object
from parfpm.optics import OpticalConfig
from parfpm.recon import led_sequence


def small_config(**kw) -> OpticalConfig:
    """64 px tiles keep the toy problems fast; radius_px is about 14.6."""
    base = dict(tile_size=64, tile_overlap=8, led_scan=(5, 5))
    base.update(kw)
    return OpticalConfig(**base)


@pytest.fixture(scope="session")
def toy_cfg() -> OpticalConfig:
    return small_config()


@pytest.fixture(scope="session")
def toy_object() -> np.ndarray:
    return synth_object("composite", 256, seed=5)


@pytest.fixture(scope="session")
def toy_frames(toy_cfg, toy_object):
    seq = led_sequence("spiral", toy_cfg.led_scan, toy_cfg.center_led)
    return simulate_dataset(toy_object, seq, toy_cfg)


@pytest.fixture(scope="session")
def toy_mosaic_frames():
    """Two by two tiles of 64 px (fov 120 px) on a 3x3 scan."""
    cfg = small_config(led_scan=(3, 3))
    obj = synth_object("composite", 480, seed=2)
    seq = led_sequence("spiral", cfg.led_scan, cfg.center_led)
    return cfg, simulate_dataset(obj, seq, cfg)
