"""Offline timing grid over worker and tile counts at the default geometry.

Simulates a 946 px field (4x4 tiles of 256 px) once into --data unless it
already holds a dataset, then runs the bench and fits wall time against
tile count for the first worker setting.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from parfpm.forward import simulate_dataset, synth_object
from parfpm.io import MANIFEST, Config, RunOptions, load_dataset, write_dataset
from parfpm.optics import OpticalConfig
from parfpm.orchestrate import bench, write_timing_csv
from parfpm.recon import led_sequence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="bench_data")
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--tiles", type=int, nargs="+", default=[1, 4, 9, 16])
    ap.add_argument("--iters", type=int, default=1)
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()

    data = Path(args.data)
    if not (data / MANIFEST).exists():
        cfg = OpticalConfig()
        config = Config(cfg, RunOptions(fov=[946, 946], seed=1))
        obj = synth_object("composite", 946 * cfg.upsample, 1)
        seq = led_sequence("spiral", cfg.led_scan, cfg.center_led)
        write_dataset(data, simulate_dataset(obj, seq, cfg), config, obj)
    ds = load_dataset(data)
    rows, summary = bench(ds.frames, ds.config.optics, args.workers, args.tiles,
                          iters=args.iters)
    write_timing_csv(args.out, rows)

    base = args.workers[0]
    pts = np.array([(int(r["tiles"]), float(r["wall_s"])) for r in rows
                    if int(r["workers"]) == base])
    slope, icpt = np.polyfit(pts[:, 0], pts[:, 1], 1)
    fit = slope * pts[:, 0] + icpt
    r2 = 1 - np.sum((pts[:, 1] - fit) ** 2) / np.sum((pts[:, 1] - pts[:, 1].mean()) ** 2)
    print(f"w{base}: {slope:.3f} s/tile + {icpt:.3f} s, R^2 {r2:.4f}")
    for key, s in summary["speedup"].items():
        print(f"speedup {key}: {s:.2f}x")
    print(f"max |diff| across workers: {summary['max_abs_diff_across_workers']:.3g}")


if __name__ == "__main__":
    main()
