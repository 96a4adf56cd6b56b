"""Seam phase jumps of a 2x2 mosaic with and without tile overlap."""
from __future__ import annotations

import argparse

from parfpm.forward import simulate_dataset, synth_object
from parfpm.metrics import seam_phase_jump
from parfpm.optics import OpticalConfig
from parfpm.orchestrate import run_offline
from parfpm.recon import led_sequence
from parfpm.stitch import seam_positions


def seam_jump(base, overlap: int, scan: int, iters: int) -> float:
    cfg = OpticalConfig(led_scan=(scan, scan), tile_overlap=overlap)
    fov = 2 * cfg.tile_size - overlap
    obj = base[:fov * cfg.upsample, :fov * cfg.upsample]
    seq = led_sequence("spiral", cfg.led_scan, cfg.center_led)
    res = run_offline(simulate_dataset(obj, seq, cfg), cfg, 1, iters=iters)
    full = res.stitch(cfg)
    seams = seam_positions([0, cfg.tile_size - overlap], cfg.tile_size, cfg.upsample)
    return 0.5 * (seam_phase_jump(full, seams, 0) + seam_phase_jump(full, seams, 1))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--overlap", type=int, default=26)
    ap.add_argument("--scan", type=int, default=9)
    ap.add_argument("--iters", type=int, default=5)
    args = ap.parse_args()

    print("seed  jump(overlap)  jump(0)  ratio")
    for seed in args.seeds:
        base = synth_object("smooth", 2048, seed)
        a = seam_jump(base, args.overlap, args.scan, args.iters)
        b = seam_jump(base, 0, args.scan, args.iters)
        print(f"{seed:4d}  {a:13.4f}  {b:7.4f}  {a / b:5.3f}")


if __name__ == "__main__":
    main()
