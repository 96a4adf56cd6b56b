"""On-disk formats: 16-bit PGM frames, CFI complex fields, JSON config and manifests.

CFI layout: b"CFI1", width and height as little-endian uint32, then
row-major (re, im) pairs of little-endian float64.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, DataError
from .forward import Frame, FrameSet, parse_noise
from .optics import OpticalConfig

FORMAT_VERSION = "1"
CFI_MAGIC = b"CFI1"
PGM_MAXVAL = 65535


# --- PGM -------------------------------------------------------------------

def write_frame(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise DataError(f"frame must be 2D, got shape {img.shape}")
    if img.dtype != np.uint16:
        if np.any(img < 0) or np.any(img > PGM_MAXVAL) or not np.all(np.mod(img, 1) == 0):
            raise DataError("frame values must be integers in [0, 65535]")
        img = img.astype(np.uint16)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, PGM_MAXVAL))
        fh.write(img.astype(">u2").tobytes())


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` header tokens and the payload offset (skips # comments)."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("malformed PGM header: unexpected end of file")
        tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DataError("malformed PGM header: missing separator before pixel data")
    return tokens, pos + 1


def read_frame(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header {tokens!r}") from None
    if maxval != PGM_MAXVAL:
        raise DataError(f"{path}: maxval {maxval} != {PGM_MAXVAL}")
    expected = w * h * 2
    actual = len(data) - offset
    if actual != expected:
        raise DataError(f"{path}: payload is {actual} bytes, expected {expected} "
                        f"for {w}x{h} 16-bit samples")
    return np.frombuffer(data, dtype=">u2", offset=offset).reshape(h, w).astype(np.uint16)


# --- CFI -------------------------------------------------------------------

def write_cfi(path, field_: np.ndarray) -> None:
    arr = np.asarray(field_, dtype=np.complex128)
    if arr.ndim != 2:
        raise DataError(f"complex field must be 2D, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        y, x = bad[0]
        raise DataError(f"non-finite value {arr[y, x]} at pixel (x={x}, y={y}); "
                        f"{len(bad)} bad pixel(s)")
    h, w = arr.shape
    if w > 0xFFFFFFFF or h > 0xFFFFFFFF:
        raise DataError(f"field {w}x{h} too large for CFI")
    with open(path, "wb") as fh:
        fh.write(CFI_MAGIC + struct.pack("<II", w, h))
        fh.write(arr.astype("<c16").tobytes())


def read_cfi(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != CFI_MAGIC:
        raise DataError(f"{path}: bad magic/version {data[:4]!r}")
    w, h = struct.unpack("<II", data[4:12])
    expected = w * h * 16
    if len(data) - 12 != expected:
        raise DataError(f"{path}: payload is {len(data) - 12} bytes, expected {expected} "
                        f"for a {w}x{h} field")
    return np.frombuffer(data, dtype="<c16", offset=12).reshape(h, w).astype(np.complex128)


# --- exported views --------------------------------------------------------

def export_view(field_: np.ndarray, which: str, path) -> dict:
    """Quantise amplitude or phase to a 16-bit PGM plus a ``.txt`` sidecar.

    Amplitude maps [0, max] -> [0, 65535]; a constant non-zero amplitude
    has no usable scale and is written as mid-gray (the sidecar keeps the
    value). Phase maps [-pi, pi] -> [0, 65535].
    """
    arr = np.asarray(field_, dtype=np.complex128)
    if which == "amplitude":
        values = np.abs(arr)
        hi = float(values.max()) if values.size else 0.0
        lo = 0.0
        if hi == 0.0:
            img = np.zeros(arr.shape, dtype=np.uint16)
        elif float(values.min()) == hi:
            img = np.full(arr.shape, 32768, dtype=np.uint16)
            lo = hi = float(hi)
        else:
            img = np.floor(values / hi * PGM_MAXVAL + 0.5).astype(np.uint16)
    elif which == "phase":
        lo, hi = -math.pi, math.pi
        values = np.angle(arr)
        img = np.floor((values - lo) / (hi - lo) * PGM_MAXVAL + 0.5)
        img = np.clip(img, 0, PGM_MAXVAL).astype(np.uint16)
    else:
        raise ConfigError(f"view must be 'amplitude' or 'phase', got {which!r}")
    write_frame(path, img)
    mapping = {"which": which, "low": lo, "high": hi, "levels": PGM_MAXVAL}
    with open(f"{path}.txt", "w") as fh:
        for k, v in mapping.items():
            fh.write(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n")
    return mapping


def import_view(path) -> np.ndarray:
    """Invert :func:`export_view` using its sidecar (real-valued result)."""
    mapping = {}
    for line in Path(f"{path}.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            mapping[k.strip()] = v.strip()
    img = read_frame(path).astype(float)
    lo, hi = float(mapping["low"]), float(mapping["high"])
    levels = int(mapping["levels"])
    if mapping["which"] == "amplitude" and lo == hi:
        return np.full(img.shape, hi)
    return lo + img / levels * (hi - lo)


# --- configuration ---------------------------------------------------------

ORDERS = ("spiral", "raster")
MODES = ("offline", "online")
OBJECTS = ("bars", "phase-disk", "composite", "smooth")


@dataclass
class RunOptions:
    """Run-level options stored next to the optical configuration."""

    iters: int = 5
    order: str = "spiral"
    workers: int = 1
    lag: Any = "auto"
    mode: str = "offline"
    noise: str = "off"
    defocus: Any = 0.0                  # float, per-tile list, or "auto"
    defocus_candidates: list = field(default_factory=list)
    fov: list = field(default_factory=lambda: [256, 256])
    object: str = "composite"
    seed: int = 0
    online_delay: Any = None
    pipeline: Any = None
    unsafe_lag: bool = False
    fft_workers: int = 1

    def validate(self, cfg: OpticalConfig) -> None:
        def check(ok, name, detail):
            if not ok:
                raise ConfigError(f"invariant '{name}' violated: {detail}")

        check(isinstance(self.iters, int) and self.iters >= 1, "iters", f"got {self.iters!r}")
        check(self.order in ORDERS, "order", f"got {self.order!r}")
        check(isinstance(self.workers, int) and self.workers >= 1, "workers",
              f"got {self.workers!r}")
        check(self.lag == "auto" or (isinstance(self.lag, int) and self.lag >= 1), "lag",
              f"need 'auto' or an integer >= 1, got {self.lag!r}")
        check(self.mode in MODES, "mode", f"got {self.mode!r}")
        parse_noise(self.noise)
        check(self.defocus == "auto" or isinstance(self.defocus, (int, float, list)),
              "defocus", f"got {self.defocus!r}")
        check(self.defocus != "auto" or len(self.defocus_candidates) > 0, "defocus_candidates",
              "defocus 'auto' needs candidate values")
        check(isinstance(self.fov, (list, tuple)) and len(self.fov) == 2
              and min(self.fov) >= cfg.tile_size, "fov",
              f"need [w, h] >= tile_size {cfg.tile_size}, got {self.fov!r}")
        check(self.object in OBJECTS, "object", f"got {self.object!r}")
        check(self.online_delay is None or float(self.online_delay) > 0, "online_delay",
              f"got {self.online_delay!r}")
        check(self.pipeline in (None, True, False), "pipeline", f"got {self.pipeline!r}")
        check(isinstance(self.fft_workers, int) and self.fft_workers >= 1, "fft_workers",
              f"got {self.fft_workers!r}")

    def tile_defocus(self):
        """Defocus argument for the partitioner (None per tile means search)."""
        return None if self.defocus == "auto" else self.defocus


@dataclass
class Config:
    optics: OpticalConfig = field(default_factory=OpticalConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "optics": self.optics.to_dict(),
                "run": asdict(self.run)}

    @classmethod
    def from_dict(cls, doc: dict) -> Config:
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - {"format_version", "optics", "run"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported config format_version {doc.get('format_version')!r}")
        if "optics" not in doc:
            raise ConfigError("missing required key 'optics'")
        optics = doc["optics"]
        names = OpticalConfig.field_names()
        unknown = set(optics) - set(names)
        if unknown:
            raise ConfigError(f"unknown optics keys: {sorted(unknown)}")
        missing = [n for n in names if n not in optics]
        if missing:
            raise ConfigError(f"missing required optics keys: {missing}")
        try:
            cfg = OpticalConfig(**optics)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        run_doc = doc.get("run", {})
        run_names = {f.name for f in fields(RunOptions)}
        unknown = set(run_doc) - run_names
        if unknown:
            raise ConfigError(f"unknown run keys: {sorted(unknown)}")
        run = RunOptions(**run_doc)
        run.validate(cfg)
        return cls(cfg, run)


def write_config(path, config: Config) -> None:
    config.run.validate(config.optics)
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def read_config(path) -> Config:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return Config.from_dict(doc)


# --- dataset manifests -----------------------------------------------------

MANIFEST = "manifest.json"


def frame_filename(index: int, led: tuple[int, int]) -> str:
    return f"frame_{index:04d}_r{led[0]:02d}_c{led[1]:02d}.pgm"


def write_dataset(directory, frames: FrameSet, config: Config,
                  truth: np.ndarray | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, f in enumerate(frames.frames):
        name = frame_filename(i, f.led)
        write_frame(d / name, f.image)
        entries.append({"file": name, "led_row": int(f.led[0]), "led_col": int(f.led[1]),
                        "timestamp_s": float(f.timestamp)})
    truth_name = None
    if truth is not None:
        truth_name = "truth.cfi"
        write_cfi(d / truth_name, truth)
    manifest = {"format_version": FORMAT_VERSION, "config": config.to_dict(),
                "intensity_scale": float(frames.intensity_scale),
                "frames": entries, "object_truth": truth_name}
    path = d / MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


@dataclass
class Dataset:
    frames: FrameSet
    config: Config
    truth: np.ndarray | None
    directory: Path


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    path = d / MANIFEST
    if not path.exists():
        raise DataError(f"{d}: no {MANIFEST}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    allowed = {"format_version", "config", "intensity_scale", "frames", "object_truth"}
    unknown = set(doc) - allowed
    if unknown:
        raise DataError(f"{path}: unknown manifest keys {sorted(unknown)}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    config = Config.from_dict(doc["config"])
    cfg = config.optics
    frames = []
    for e in doc["frames"]:
        led = (int(e["led_row"]), int(e["led_col"]))
        if not (0 <= led[0] < cfg.led_grid_rows and 0 <= led[1] < cfg.led_grid_cols):
            raise DataError(f"{path}: LED {led} outside the LED grid")
        fp = d / e["file"]
        if not fp.exists():
            raise DataError(f"{path}: referenced frame {e['file']} does not exist")
        frames.append(Frame(led, read_frame(fp), float(e["timestamp_s"])))
    truth = None
    if doc.get("object_truth"):
        tp = d / doc["object_truth"]
        if not tp.exists():
            raise DataError(f"{path}: referenced truth {doc['object_truth']} does not exist")
        truth = read_cfi(tp)
    fs = FrameSet(frames, cfg, float(doc["intensity_scale"]))
    return Dataset(fs, config, truth, d)
