"""``fpm`` command line: simulate, reconstruct, stitch, export, bench.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 refused
unsafe pipeline lag.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, FpmError
from .forward import simulate_dataset, synth_object
from .io import (Config, export_view, load_dataset, read_cfi, read_config, write_cfi,
                 write_dataset)
from .metrics import amplitude_rmse, band_limit, phase_rmse
from .orchestrate import (ReplayStream, bench, run_offline, run_online, write_timing_csv)
from .recon import led_sequence, synthesized_na
from .stitch import stitch_placed
from .tiles import partition_tiles

log = logging.getLogger("parfpm")

REPORT = "report.json"
TILES_LIST = "tiles.list"


def _write_report(path: Path, command: list[str], config: Config | None, timing: list[dict],
                  metrics: dict, outputs: list) -> Path:
    report = {"command": command,
              "config": config.to_dict() if config is not None else None,
              "timing": timing,
              "metrics": metrics,
              "outputs": [str(p) for p in outputs]}
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def _config_digest(config: Config) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError(f"expected positive integers, got {text!r}")
    return values


def _lag(text: str):
    if text == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"--lag must be 'auto' or an integer, got {text!r}") from None


def _default_workers() -> int | None:
    env = os.environ.get("FPM_WORKERS")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"FPM_WORKERS must be an integer, got {env!r}") from None


# --- commands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = read_config(args.config) if args.config else Config()
    run = config.run
    if args.object is not None:
        run = replace(run, object=args.object)
    if args.seed is not None:
        run = replace(run, seed=args.seed)
    if args.noise is not None:
        run = replace(run, noise=args.noise)
    config = Config(config.optics, run)
    cfg = config.optics
    run.validate(cfg)

    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ConfigError(f"{out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    up = cfg.upsample
    w, h = (int(v) for v in run.fov)
    obj = synth_object(run.object, (h * up, w * up), run.seed)
    seq = led_sequence(run.order, cfg.led_scan, cfg.center_led)
    defocus = run.tile_defocus()
    frames = simulate_dataset(obj, seq, cfg, run.noise, seed=run.seed,
                              defocus=0.0 if defocus is None else defocus)
    manifest = write_dataset(out, frames, config, obj)
    # no timing here so that repeated runs give byte-identical directories
    _write_report(out / REPORT, ["simulate"] + args.argv, config, [],
                  {"frames": len(frames), "intensity_scale": frames.intensity_scale},
                  [manifest, out / "truth.cfi"])
    print(f"wrote {len(frames)} frames to {out}")
    return 0


def cmd_reconstruct(args) -> int:
    data = load_dataset(args.data)
    config = data.config
    run = config.run
    overrides = {"iters": args.iters, "order": args.order, "workers": args.workers,
                 "lag": args.lag, "mode": args.mode, "online_delay": args.online_delay,
                 "fft_workers": args.fft_workers, "pipeline": args.pipeline}
    run = replace(run, **{k: v for k, v in overrides.items() if v is not None})
    if args.unsafe_lag:
        run = replace(run, unsafe_lag=True)
    config = Config(config.optics, run)
    cfg = config.optics
    run.validate(cfg)
    frames = data.frames
    if not frames.complete:
        raise DataError("incomplete dataset: frames missing for some scan LEDs")

    if run.mode == "offline":
        res = run_offline(frames, cfg, run.workers, iters=run.iters, order=run.order,
                          lag=run.lag, pipeline=run.pipeline, unsafe_lag=run.unsafe_lag,
                          fft_workers=run.fft_workers, defocus=run.defocus,
                          defocus_candidates=run.defocus_candidates)
    else:
        defocus = run.tile_defocus()
        if defocus is None:
            raise ConfigError("online mode needs explicit defocus values, not 'auto'")
        tiles = partition_tiles(frames.fov, cfg, defocus)
        stream = ReplayStream.from_frameset(frames, run.online_delay)
        res = run_online(stream, cfg, run.workers, tiles=tiles, iters=run.iters,
                         intensity_scale=frames.intensity_scale, fft_workers=run.fft_workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    up = cfg.upsample
    outputs = []
    lines = ["# cfi x0 y0 (HR px)"]
    for t, f in zip(res.tiles, res.fields):
        name = f"tile_r{t.grid_pos[0]:02d}_c{t.grid_pos[1]:02d}.cfi"
        write_cfi(out / name, f)
        outputs.append(out / name)
        lines.append(f"{name} {t.origin[0] * up} {t.origin[1] * up}")
    (out / TILES_LIST).write_text("\n".join(lines) + "\n")
    stitched = res.stitch(cfg)
    write_cfi(out / "stitched.cfi", stitched)
    outputs += [out / TILES_LIST, out / "stitched.cfi"]

    row = res.timing_row(f"{run.mode}-w{run.workers}-{_config_digest(config)}")
    write_timing_csv(out / "timings.csv", [row])
    outputs.append(out / "timings.csv")
    metrics = {"residuals": {f"{t.grid_pos[0]},{t.grid_pos[1]}": m["residuals"]
                             for t, m in zip(res.tiles, res.metrics)},
               "lag": res.lag}
    if res.acquisition_s is not None:
        metrics["acquisition_s"] = res.acquisition_s
        metrics.update({k: v for k, v in res.extra.items() if k != "sequence"})
    if data.truth is not None and data.truth.shape == stitched.shape:
        ref = band_limit(data.truth, synthesized_na(cfg), cfg)
        metrics["amplitude_rmse"] = amplitude_rmse(stitched, ref)
        metrics["phase_rmse"] = phase_rmse(stitched, ref)
    _write_report(out / REPORT, ["reconstruct"] + args.argv, config, [row], metrics, outputs)
    print(f"{run.mode}: {len(res.tiles)} tiles, wall {res.wall_s:.3f} s -> {out}")
    return 0


def read_tiles_list(path: Path) -> list[tuple[tuple[int, int], Path]]:
    """Entries ``<cfi path> <x0> <y0>``; relative paths are taken from the list's folder."""
    entries = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 1 and not entries:
            entries.append(((0, 0), path.parent / parts[0]))
            continue
        if len(parts) != 3:
            raise DataError(f"{path}:{n}: expected '<file> <x0> <y0>', got {line!r}")
        try:
            origin = (int(parts[1]), int(parts[2]))
        except ValueError:
            raise DataError(f"{path}:{n}: origins must be integers") from None
        entries.append((origin, path.parent / parts[0]))
    if not entries:
        raise DataError(f"{path}: no tiles listed")
    return entries


def cmd_stitch(args) -> int:
    entries = read_tiles_list(Path(args.inputs))
    out = Path(args.out)
    if len(entries) == 1:
        read_cfi(entries[0][1])     # validate before copying
        shutil.copyfile(entries[0][1], out)
    else:
        write_cfi(out, stitch_placed([(o, read_cfi(p)) for o, p in entries]))
    _write_report(Path(f"{out}.report.json"), ["stitch"] + args.argv, None, [],
                  {"tiles": len(entries)}, [out])
    print(f"stitched {len(entries)} tiles -> {out}")
    return 0


def cmd_export(args) -> int:
    if not args.amplitude and not args.phase:
        raise ConfigError("export needs --amplitude and/or --phase")
    field_ = read_cfi(args.input)
    outputs, metrics = [], {}
    for which, path in (("amplitude", args.amplitude), ("phase", args.phase)):
        if path:
            metrics[which] = export_view(field_, which, path)
            outputs += [Path(path), Path(f"{path}.txt")]
    _write_report(Path(f"{outputs[0]}.report.json"), ["export"] + args.argv, None, [],
                  metrics, outputs)
    return 0


def cmd_bench(args) -> int:
    data = load_dataset(args.data)
    cfg = data.config.optics
    workers = _int_list(args.workers)
    tiles = _int_list(args.tiles)
    if args.iters < 1:
        raise ConfigError(f"--iters must be >= 1, got {args.iters}")
    rows, summary = bench(data.frames, cfg, workers, tiles, iters=args.iters, order=args.order)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_timing_csv(out, rows)
    _write_report(out.with_suffix(".report.json"), ["bench"] + args.argv, data.config, rows,
                  summary, [out])
    base = summary["baseline_workers"]
    for key, s in summary["speedup"].items():
        print(f"speedup {key} vs w{base}: {s:.2f}x")
    print(f"max |diff| across workers: {summary['max_abs_diff_across_workers']:.3g}")
    return 0


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a dataset of LR frames")
    s.add_argument("--config")
    s.add_argument("--object", choices=["bars", "phase-disk", "composite", "smooth"])
    s.add_argument("--seed", type=int)
    s.add_argument("--noise", help="'off' or 'photons=K'")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", help="reconstruct all tiles and stitch them")
    r.add_argument("--data", required=True)
    r.add_argument("--iters", type=int)
    r.add_argument("--order", choices=["spiral", "raster"])
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--lag", type=_lag_arg)
    r.add_argument("--unsafe-lag", action="store_true")
    r.add_argument("--pipeline", action=argparse.BooleanOptionalAction, default=None,
                   help="pipeline updates inside each tile (default: only when workers > tiles)")
    r.add_argument("--mode", choices=["offline", "online"])
    r.add_argument("--online-delay", type=float)
    r.add_argument("--fft-workers", type=int)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    st = sub.add_parser("stitch", help="stitch tile CFIs listed with their origins")
    st.add_argument("--inputs", required=True)
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_stitch)

    e = sub.add_parser("export", help="export amplitude/phase views as PGM")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--amplitude")
    e.add_argument("--phase")
    e.set_defaults(func=cmd_export)

    b = sub.add_parser("bench", help="timing grid over worker and tile counts")
    b.add_argument("--data", required=True)
    b.add_argument("--workers", default="1,2,4,8")
    b.add_argument("--tiles", default="1,4,9,16")
    b.add_argument("--iters", type=int, default=1)
    b.add_argument("--order", choices=["spiral", "raster"], default="spiral")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def _lag_arg(text: str):
    try:
        return _lag(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # argparse usage errors are configuration errors
        return 0 if exc.code == 0 else 2
    args.argv = argv[1:] if argv and argv[0] in ("-v", "--verbose") else argv
    args.argv = args.argv[1:]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "reconstruct" and args.workers is None:
            args.workers = _default_workers()
        return args.func(args)
    except FpmError as exc:
        print(f"fpm {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"fpm {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
