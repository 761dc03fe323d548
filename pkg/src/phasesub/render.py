"""Raster export of phase images: 16-bit PGM magnitude and diverging-color PPM."""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError
from .io import atomic_write

STYLES = ("gray", "color")


def _normalized(values):
    v = np.asarray(getattr(values, "values", values), dtype=float)
    if v.ndim != 2:
        raise PreconditionError(f"expected a 2D image, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise PreconditionError("image contains non-finite values")
    peak = float(np.abs(v).max()) if v.size else 0.0
    return (v / peak if peak > 0 else np.zeros_like(v)), peak


def pgm_bytes(values):
    """Binary 16-bit PGM of ``|values| / max``; returns ``(bytes, max)``."""
    norm, peak = _normalized(values)
    pix = np.rint(np.abs(norm) * 65535).astype(">u2")
    h, w = pix.shape
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + pix.tobytes(), peak


def ppm_bytes(values):
    """Binary 8-bit PPM: positive phase on the red ramp, negative on blue,
    brightness set by magnitude. Returns ``(bytes, max)``."""
    norm, peak = _normalized(values)
    level = np.rint(np.abs(norm) * 255).astype(np.uint8)
    h, w = norm.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[..., 0] = np.where(norm > 0, level, 0)
    rgb[..., 2] = np.where(norm < 0, level, 0)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes(), peak


def render(image, path, style: str = "color") -> float:
    """Write ``image`` to ``path``; returns the normalization maximum."""
    if style not in STYLES:
        raise PreconditionError(f"unknown render style {style!r}; choose from {STYLES}")
    blob, peak = (pgm_bytes if style == "gray" else ppm_bytes)(image)
    atomic_write(path, blob)
    return peak
