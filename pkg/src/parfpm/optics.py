"""Physical model of the virtual LED-array microscope.

Units: wavelength, pixels and defocus in micrometres; LED pitch and LED
height in millimetres; spatial frequencies in cycles per micrometre.
Spectra are always stored centered (DC at index ``n // 2``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np
import scipy.fft

from .errors import ConfigError, DomainError

# threads used inside each 2D transform; set by the orchestrators
FFT_WORKERS = 1


@dataclass(frozen=True)
class OpticalConfig:
    """All physical and discretisation parameters of the microscope."""

    wavelength: float = 0.525
    objective_na: float = 0.1
    magnification: float = 2.0
    camera_pixel: float = 2.4
    led_pitch: float = 2.5
    led_grid_rows: int = 64
    led_grid_cols: int = 64
    led_height: float = 83.0
    center_led: tuple[int, int] = (32, 32)
    led_scan: tuple[int, int] = (13, 13)
    upsample: int = 4
    tile_size: int = 256
    tile_overlap: int = 26
    acq_pattern_delay: float = 0.3
    acq_exposure: float = 0.03

    def __post_init__(self):
        # JSON gives lists; keep tuples so the config stays hashable
        object.__setattr__(self, "center_led", tuple(int(v) for v in self.center_led))
        object.__setattr__(self, "led_scan", tuple(int(v) for v in self.led_scan))
        self.validate()

    def validate(self) -> None:
        def check(ok: bool, name: str, detail: str):
            if not ok:
                raise ConfigError(f"invariant '{name}' violated: {detail}")

        check(0 < self.objective_na < 1, "objective_na",
              f"need 0 < objective_na < 1, got {self.objective_na}")
        check(self.wavelength > 0, "wavelength", f"need > 0, got {self.wavelength}")
        check(self.magnification > 0, "magnification",
              f"need > 0, got {self.magnification}")
        check(self.camera_pixel > 0, "camera_pixel", f"need > 0, got {self.camera_pixel}")
        check(self.led_height > 0, "led_height", f"need > 0, got {self.led_height}")
        check(self.led_pitch > 0, "led_pitch", f"need > 0, got {self.led_pitch}")
        check(self.led_grid_rows >= 1 and self.led_grid_cols >= 1, "led_grid",
              "LED grid must be non-empty")
        check(isinstance(self.upsample, int) and self.upsample >= 2, "upsample",
              f"need integer >= 2, got {self.upsample}")
        check(self.tile_size >= 32 and self.tile_size % 2 == 0, "tile_size",
              f"need even and >= 32, got {self.tile_size}")
        check(0 <= self.tile_overlap < self.tile_size, "tile_overlap",
              f"need 0 <= tile_overlap < tile_size, got {self.tile_overlap}")
        check(self.acq_pattern_delay >= 0 and self.acq_exposure >= 0, "acq_timing",
              "acquisition delays must be non-negative")
        rows, cols = self.led_scan
        check(rows % 2 == 1 and cols % 2 == 1 and rows >= 1 and cols >= 1, "led_scan",
              f"scan dimensions must be odd, got {self.led_scan}")
        cr, cc = self.center_led
        check(0 <= cr - rows // 2 and cr + rows // 2 < self.led_grid_rows
              and 0 <= cc - cols // 2 and cc + cols // 2 < self.led_grid_cols,
              "led_scan", f"scan {self.led_scan} around {self.center_led} leaves the LED grid")

    @property
    def dx_obj(self) -> float:
        """Object-plane size of one camera pixel (µm)."""
        return self.camera_pixel / self.magnification

    @property
    def dx_hr(self) -> float:
        return self.dx_obj / self.upsample

    @property
    def dk(self) -> float:
        """Frequency step of a tile grid, shared by the LR and HR grids."""
        return 1.0 / (self.tile_size * self.dx_obj)

    @property
    def cutoff(self) -> float:
        return self.objective_na / self.wavelength

    def scan_leds(self) -> list[tuple[int, int]]:
        """Row-major list of LEDs in the scan sub-grid (absolute grid indices)."""
        rows, cols = self.led_scan
        cr, cc = self.center_led
        return [(cr + r - rows // 2, cc + c - cols // 2)
                for r in range(rows) for c in range(cols)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center_led"] = list(self.center_led)
        d["led_scan"] = list(self.led_scan)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class WaveVector(NamedTuple):
    fx: float
    fy: float


@dataclass(frozen=True, eq=False)
class Pupil:
    grid: int
    radius_px: float
    defocus: float
    values: np.ndarray = field(repr=False)
    support: np.ndarray = field(repr=False)

    @property
    def support_index(self) -> np.ndarray:
        """Flat indices of the support pixels (cached)."""
        idx = self.__dict__.get("_support_index")
        if idx is None:
            idx = np.flatnonzero(self.support)
            object.__setattr__(self, "_support_index", idx)
        return idx


def as_field(values) -> np.ndarray:
    """Validate and return a 2D complex128 array (the complex-field currency)."""
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 2:
        raise DomainError(f"complex field must be 2D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("complex field contains non-finite values")
    return arr


def led_position_um(led: tuple[int, int], cfg: OpticalConfig) -> tuple[float, float]:
    row, col = led
    if not (0 <= row < cfg.led_grid_rows and 0 <= col < cfg.led_grid_cols):
        raise DomainError(f"LED {led} outside the {cfg.led_grid_rows}x{cfg.led_grid_cols} grid")
    x = (col - cfg.center_led[1]) * cfg.led_pitch * 1000.0
    y = (row - cfg.center_led[0]) * cfg.led_pitch * 1000.0
    return x, y


def illumination_wavevector(led: tuple[int, int], tile_center: tuple[float, float],
                            cfg: OpticalConfig) -> WaveVector:
    """Plane-wave approximation of the LED illumination seen at ``tile_center``.

    ``tile_center`` is (x, y) in µm in the object plane, measured from the
    optical axis. A LED displaced towards +x samples -x frequencies.
    """
    x_led, y_led = led_position_um(led, cfg)
    dx = x_led - tile_center[0]
    dy = y_led - tile_center[1]
    h = cfg.led_height * 1000.0
    dist = math.sqrt(dx * dx + dy * dy + h * h)
    return WaveVector(-dx / (cfg.wavelength * dist), -dy / (cfg.wavelength * dist))


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def spectrum_offset(wv: WaveVector, cfg: OpticalConfig) -> tuple[int, int]:
    """Integer (row, col) offset of the sampled spectrum block from DC."""
    return _round_half_up(wv.fy / cfg.dk), _round_half_up(wv.fx / cfg.dk)


def frequency_radius(grid: int, dk: float) -> np.ndarray:
    """Radial frequency (cycles/µm) of each pixel of a centered ``grid``² spectrum."""
    k = (np.arange(grid) - grid // 2) * dk
    return np.hypot(k[:, None], k[None, :])


def build_pupil(cfg: OpticalConfig, grid: int | None = None, defocus: float = 0.0) -> Pupil:
    """Coherent transfer function: binary disk of radius NA/λ with defocus phase."""
    grid = cfg.tile_size if grid is None else grid
    if grid % 2 or grid < 32:
        raise DomainError(f"pupil grid must be even and >= 32, got {grid}")
    dk = 1.0 / (grid * cfg.dx_obj)
    radius_px = cfg.cutoff / dk
    if radius_px >= grid / 2:
        raise ConfigError(f"pupil exceeds Nyquist of LR grid (radius {radius_px:.2f} px "
                          f">= {grid // 2} px)")
    idx = np.arange(grid) - grid // 2
    rpix = np.hypot(idx[:, None], idx[None, :])
    support = rpix <= radius_px
    values = np.zeros((grid, grid), dtype=np.complex128)
    if defocus == 0:
        values[support] = 1.0
    else:
        fr = rpix[support] * dk
        kz = np.sqrt((1.0 / cfg.wavelength) ** 2 - fr ** 2)
        values[support] = np.exp(1j * 2 * np.pi * defocus * kz)
    values.flags.writeable = False
    support.flags.writeable = False
    return Pupil(grid, float(radius_px), float(defocus), values, support)


def fft2(x: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Unitary 2D FFT returning a centered spectrum."""
    w = FFT_WORKERS if workers is None else workers
    return scipy.fft.fftshift(scipy.fft.fft2(x, norm="ortho", workers=w))


def ifft2(spectrum: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Inverse of :func:`fft2` (input spectrum centered)."""
    w = FFT_WORKERS if workers is None else workers
    return scipy.fft.ifft2(scipy.fft.ifftshift(spectrum), norm="ortho", workers=w)
