"""Tile-parallel Fourier ptychographic reconstruction with pipelined updates."""
from __future__ import annotations

from .errors import ConfigError, DataError, DomainError, FpmError, UnsafeLagError
from .forward import Frame, FrameSet, simulate_dataset, simulate_frame, synth_object
from .io import Config, RunOptions, load_dataset, read_cfi, write_cfi
from .optics import OpticalConfig, build_pupil, illumination_wavevector, spectrum_offset
from .orchestrate import RunResult, bench, run_offline, run_online
from .pipeline import PipelineSchedule, min_safe_lag, pipelined_reconstruct_tile
from .recon import led_sequence, reconstruct_tile, update_step
from .stitch import mean_ratio, stitch_mosaic, stitch_pair
from .tiles import TileSpec, partition_tiles

__version__ = "0.1.0"

__all__ = [
    "Config", "ConfigError", "DataError", "DomainError", "FpmError", "Frame", "FrameSet",
    "OpticalConfig", "PipelineSchedule", "RunOptions", "RunResult", "TileSpec",
    "UnsafeLagError", "bench", "build_pupil", "illumination_wavevector", "led_sequence",
    "load_dataset", "mean_ratio", "min_safe_lag", "partition_tiles",
    "pipelined_reconstruct_tile", "read_cfi", "reconstruct_tile", "run_offline",
    "run_online", "simulate_dataset", "simulate_frame", "spectrum_offset", "stitch_mosaic",
    "stitch_pair", "synth_object", "update_step", "write_cfi",
]
