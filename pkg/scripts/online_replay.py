"""Replay a simulated 169-frame acquisition and compare wall time with it."""
from __future__ import annotations

import argparse

from parfpm.forward import simulate_dataset, synth_object
from parfpm.optics import OpticalConfig
from parfpm.orchestrate import ReplayStream, run_online
from parfpm.recon import led_sequence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delay", type=float, default=0.33, help="seconds between frames")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--iters", type=int, default=1)
    args = ap.parse_args()

    cfg = OpticalConfig()
    obj = synth_object("composite", cfg.tile_size * cfg.upsample, 4)
    seq = led_sequence("spiral", cfg.led_scan, cfg.center_led)
    frames = simulate_dataset(obj, seq, cfg)
    res = run_online(ReplayStream.from_frameset(frames, args.delay), cfg, args.workers,
                     iters=args.iters, intensity_scale=frames.intensity_scale)
    print(f"{len(frames)} frames, acquisition {res.acquisition_s:.2f} s, "
          f"wall {res.wall_s:.2f} s, compute {sum(res.tile_seconds):.2f} s")


if __name__ == "__main__":
    main()
