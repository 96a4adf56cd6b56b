"""Quality metrics used by the CLI reports and the experiment scripts."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .forward import bar_groups
from .optics import OpticalConfig, fft2, ifft2


def band_limit(field: np.ndarray, na: float, cfg: OpticalConfig) -> np.ndarray:
    """Ideal circular low-pass of an HR field to numerical aperture ``na``."""
    h, w = field.shape
    fy = (np.arange(h) - h // 2) / (h * cfg.dx_hr)
    fx = (np.arange(w) - w // 2) / (w * cfg.dx_hr)
    mask = np.hypot(fy[:, None], fx[None, :]) <= na / cfg.wavelength
    return ifft2(fft2(field) * mask)


def align_global_phase(field: np.ndarray, reference: np.ndarray) -> np.ndarray:
    c = np.vdot(field, reference)
    return field * (c / abs(c)) if abs(c) > 0 else field


def amplitude_rmse(field: np.ndarray, reference: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.abs(field) - np.abs(reference)) ** 2)))


def phase_rmse(field: np.ndarray, reference: np.ndarray) -> float:
    """RMS wrapped phase difference after removing the best global phase."""
    aligned = align_global_phase(field, reference)
    diff = np.angle(aligned * np.conj(reference))
    return float(np.sqrt(np.mean(diff ** 2)))


def bar_contrast(amplitude: np.ndarray, group: dict) -> float:
    """Michelson contrast between the gaps and bars of one three-bar group.

    Profiles are averaged over the middle half of the bar length; the
    contrast is taken between the darker of the two gap centers and the
    brighter of the three bar centers, so all three bars must separate.
    """
    y0, x0, hh, ww = group["box"]
    p = group["period"]
    half = p // 2
    if group["orient"] == "v":
        profile = amplitude[y0 + hh // 4:y0 + 3 * hh // 4, x0:x0 + ww].mean(axis=0)
    else:
        profile = amplitude[y0:y0 + hh, x0 + ww // 4:x0 + 3 * ww // 4].mean(axis=1)

    def sample(pos: float) -> float:
        return float(np.interp(pos, np.arange(profile.size), profile))

    bars = [sample(k * p + (half - 1) / 2) for k in range(3)]
    gaps = [sample(k * p + half + (half - 1) / 2) for k in range(2)]
    hi, lo = min(gaps), max(bars)   # bars are dark, gaps bright
    return (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0


def smallest_resolved_period(amplitude: np.ndarray, threshold: float = 0.2) -> int | None:
    """Smallest bar period (HR px) whose groups in both orientations reach
    ``threshold`` contrast, or None if none does."""
    size = amplitude.shape[0]
    by_period: dict[int, list[float]] = {}
    for g in bar_groups(size):
        by_period.setdefault(g["period"], []).append(bar_contrast(amplitude, g))
    resolved = [p for p, cs in by_period.items() if min(cs) >= threshold]
    return min(resolved) if resolved else None


def seam_phase_jump(field: np.ndarray, seams: Sequence[int], axis: int) -> float:
    """Mean absolute excess phase step across seam lines.

    For a seam at index ``s`` along ``axis`` (first index of the second
    part), the step between ``s - 1`` and ``s`` is compared with the mean
    of the steps just before and after it, which removes the sample's own
    smooth phase gradient.
    """
    ph = np.angle(field)
    f = np.moveaxis(ph, axis, 0)

    def step(i):
        return np.angle(np.exp(1j * (f[i] - f[i - 1])))

    jumps = []
    for s in seams:
        local = 0.5 * (step(s - 1) + step(s + 1))
        jumps.append(np.abs(np.angle(np.exp(1j * (step(s) - local)))))
    return float(np.mean(jumps)) if jumps else 0.0
