"""Resolution measurements: skeleton FWHM radii and spectral coverage ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, PreconditionError


def _values(image) -> np.ndarray:
    return np.asarray(getattr(image, "values", image), dtype=float)


def _pitch(image, dx, dz):
    grid = getattr(image, "grid", None)
    if dx is None:
        dx = grid.dx if grid is not None else 1.0
    if dz is None:
        dz = grid.dz if grid is not None else 1.0
    return float(dx), float(dz)


@dataclass
class VesselSkeleton:
    pixels: np.ndarray      # (K, 2) rows of (iz, ix)
    mask: np.ndarray        # thinned skeleton
    foreground: np.ndarray  # binarized image
    threshold: float        # absolute threshold on |values|


def zhang_suen(mask: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a boolean image."""
    img = np.pad(np.asarray(mask, dtype=np.uint8), 1)
    while True:
        changed = False
        for step in (0, 1):
            p2, p3, p4 = img[:-2, 1:-1], img[:-2, 2:], img[1:-1, 2:]
            p5, p6, p7 = img[2:, 2:], img[2:, 1:-1], img[2:, :-2]
            p8, p9 = img[1:-1, :-2], img[:-2, :-2]
            ring = (p2, p3, p4, p5, p6, p7, p8, p9)
            b = sum(r.astype(np.int16) for r in ring)
            a = sum(((ring[i] == 0) & (ring[(i + 1) % 8] == 1)).astype(np.int16) for i in range(8))
            remove = (img[1:-1, 1:-1] == 1) & (b >= 2) & (b <= 6) & (a == 1)
            if step == 0:
                remove &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                remove &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if remove.any():
                img[1:-1, 1:-1][remove] = 0
                changed = True
        if not changed:
            return img[1:-1, 1:-1].astype(bool)


def skeletonize(image, threshold_db: float = -6.0) -> VesselSkeleton:
    """Binarize ``|values|`` at ``threshold_db`` below the maximum, then thin."""
    mag = np.abs(_values(image))
    if mag.size == 0 or np.ptp(mag) == 0:
        raise PreconditionError("image is constant; nothing to skeletonize")
    thr = mag.max() * 10.0 ** (threshold_db / 20.0)
    fg = mag >= thr
    if not fg.any():
        raise PreconditionError("no vessels above threshold")
    skel = zhang_suen(fg)
    return VesselSkeleton(pixels=np.argwhere(skel), mask=skel, foreground=fg, threshold=thr)


@dataclass
class RadiusResult:
    radii: np.ndarray
    skipped: int


def radius_fwhm(image, skeleton: VesselSkeleton, dx: Optional[float] = None,
                dz: Optional[float] = None, refine: bool = True) -> RadiusResult:
    """Distance from each skeleton pixel to the nearest pixel at or below half its value.

    With ``refine`` the half-value crossing is located to sub-pixel precision
    by bilinear interpolation along the segment to that nearest pixel.
    Pixels with no half-value pixel anywhere are skipped and counted.
    """
    if len(skeleton.pixels) == 0:
        raise PreconditionError("empty skeleton: no centerline pixels to measure")
    dx, dz = _pitch(image, dx, dz)
    mag = np.abs(_values(image))
    iz, ix = np.indices(mag.shape)
    flat_mag = mag.ravel()
    fz, fx = iz.ravel() * dz, ix.ravel() * dx
    radii, skipped = [], 0
    t = np.linspace(0.0, 1.0, 129)
    for pz, px in skeleton.pixels:
        half = mag[pz, px] / 2.0
        cand = flat_mag <= half
        if not cand.any():
            skipped += 1
            continue
        d2 = (fz[cand] - pz * dz) ** 2 + (fx[cand] - px * dx) ** 2
        k = int(np.argmin(d2))
        dist = math.sqrt(d2[k])
        if refine:
            qz, qx = fz[cand][k] / dz, fx[cand][k] / dx
            along = ndimage.map_coordinates(mag, [pz + t * (qz - pz), px + t * (qx - px)], order=1)
            j = int(np.argmax(along <= half))
            if j > 0:
                frac = (along[j - 1] - half) / (along[j - 1] - along[j])
                dist *= t[j - 1] + frac * (t[j] - t[j - 1])
        radii.append(dist)
    return RadiusResult(np.asarray(radii), skipped)


def radius_histogram(radii, bin_width: float, max_radius: Optional[float] = None):
    """Counts of radii in bins of ``bin_width`` starting at 0."""
    radii = np.asarray(radii, dtype=float)
    top = max_radius if max_radius is not None else (radii.max() if radii.size else bin_width)
    edges = np.arange(0.0, top + bin_width, bin_width)
    if edges.size < 2:
        edges = np.array([0.0, bin_width])
    counts, edges = np.histogram(radii, bins=edges)
    return edges, counts


def radial_profile(values, dx: float, dz: float):
    """Radially averaged 2D DFT magnitude.

    Frequencies are computed in cycles/m per axis before binning, so
    anisotropic pixels are handled. Bins are one coarse DFT bin wide; bin 0
    holds only the DC term, so ``A[0] = |mean| * n_pixels``.
    Returns ``(bin_center_freqs, A)``.
    """
    values = np.asarray(values, dtype=float)
    nz, nx = values.shape
    mag = np.abs(np.fft.fft2(values))
    fz = np.fft.fftfreq(nz, dz)[:, None]
    fx = np.fft.fftfreq(nx, dx)[None, :]
    f = np.hypot(fz, fx)
    df = max(1.0 / (nx * dx), 1.0 / (nz * dz))
    k = np.rint(f / df).astype(int)
    k[(k == 0) & (f > 0)] = 1
    sums = np.bincount(k.ravel(), weights=mag.ravel())
    counts = np.bincount(k.ravel())
    used = counts > 0
    centers = np.arange(len(sums)) * df
    return centers[used], sums[used] / counts[used]


@dataclass
class CoverageResult:
    ratio: float
    cutoff_amplitude: float
    f_star: float
    reached: bool


def coverage_ratio(psi, cfi, wavelength: float, dx: Optional[float] = None,
                   dz: Optional[float] = None) -> CoverageResult:
    """How far the PSI spectrum extends past the CFI amplitude at ``1 / wavelength``.

    Each radial profile is normalized by its own maximum over non-DC bins
    (the two images carry different units). The cutoff is the CFI amplitude
    at ``1 / wavelength``; ``f*`` is the highest frequency where the PSI
    profile still reaches it, and the ratio is ``f* * wavelength``.
    ``reached`` is False when PSI never reaches the cutoff or stays above it
    to the end of the spectrum.
    """
    dx, dz = _pitch(psi, dx, dz)
    a, b = _values(psi), _values(cfi)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    f_cut = 1.0 / wavelength
    if f_cut > min(1.0 / (2 * dx), 1.0 / (2 * dz)):
        raise PreconditionError("1/wavelength lies above the grid Nyquist frequency")
    f, a_psi = radial_profile(a, dx, dz)
    _, a_cfi = radial_profile(b, dx, dz)
    f, a_psi, a_cfi = f[1:], a_psi[1:], a_cfi[1:]
    if a_psi.max() == 0 or a_cfi.max() == 0:
        raise PreconditionError("image spectrum is empty")
    a_psi = a_psi / a_psi.max()
    a_cfi = a_cfi / a_cfi.max()
    cutoff = float(np.interp(f_cut, f, a_cfi))
    above = np.flatnonzero(a_psi >= cutoff)
    if above.size == 0:
        return CoverageResult(float(f[0] * wavelength), cutoff, float(f[0]), False)
    j = int(above[-1])
    if j == len(f) - 1:
        return CoverageResult(float(f[j] * wavelength), cutoff, float(f[j]), False)
    # linear crossing between bin j (>= cutoff) and j + 1 (< cutoff)
    frac = (a_psi[j] - cutoff) / (a_psi[j] - a_psi[j + 1])
    f_star = f[j] + frac * (f[j + 1] - f[j])
    return CoverageResult(float(f_star * wavelength), cutoff, float(f_star), True)


def lateral_profile(image, rows=None) -> np.ndarray:
    """Mean ``|values|`` over ``rows`` (all rows by default) for each column."""
    mag = np.abs(_values(image))
    if rows is not None:
        mag = mag[rows]
    return mag.mean(axis=0)


def profile_fwhm(profile, dx: float = 1.0) -> float:
    """Full width at half maximum around the global peak, with linear
    interpolation at the crossings; a side that never drops below half
    extends to the profile edge."""
    p = np.asarray(profile, dtype=float)
    c = int(np.argmax(p))
    half = p[c] / 2.0
    left = float(0)
    for i in range(c, 0, -1):
        if p[i - 1] < half:
            left = i - (p[i] - half) / (p[i] - p[i - 1])
            break
    right = float(len(p) - 1)
    for i in range(c, len(p) - 1):
        if p[i + 1] < half:
            right = i + (p[i] - half) / (p[i] - p[i + 1])
            break
    return (right - left) * dx


def peak_dip(profile, x, centers, window: float) -> float:
    """Relative dip between two peaks: ``1 - valley / min(peak1, peak2)``.

    Peaks are the profile maxima within ``window`` of each expected center;
    the valley is the minimum strictly between the two centers.
    """
    p = np.asarray(profile, dtype=float)
    x = np.asarray(x, dtype=float)
    c0, c1 = sorted(centers)
    peaks = [p[np.abs(x - c) <= window].max() for c in (c0, c1)]
    between = (x > c0) & (x < c1)
    if not between.any():
        raise PreconditionError("no samples between the two peaks")
    return float(1.0 - p[between].min() / min(peaks))


@dataclass
class MetricsReport:
    radii_psi: np.ndarray
    radii_cfi: np.ndarray
    histogram_psi: tuple
    histogram_cfi: tuple
    coverage_ratio: float
    cutoff_amplitude: float
    f_star: float
    cutoff_reached: bool
    skipped_psi: int = 0
    skipped_cfi: int = 0
    bin_width: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def stats(r):
            r = np.asarray(r)
            if r.size == 0:
                return {"count": 0}
            return {"count": int(r.size), "mean_m": float(r.mean()), "median_m": float(np.median(r)),
                    "min_m": float(r.min()), "max_m": float(r.max())}
        return {
            "coverage_ratio": self.coverage_ratio,
            "cutoff_amplitude": self.cutoff_amplitude,
            "f_star_per_m": self.f_star,
            "cutoff_reached": self.cutoff_reached,
            "radius_psi": stats(self.radii_psi),
            "radius_cfi": stats(self.radii_cfi),
            "skipped_psi": self.skipped_psi,
            "skipped_cfi": self.skipped_cfi,
            "histogram_bin_width_m": self.bin_width,
            "histogram_psi_counts": [int(c) for c in self.histogram_psi[1]],
            "histogram_cfi_counts": [int(c) for c in self.histogram_cfi[1]],
            **self.extra,
        }

    def to_text(self) -> str:
        d = self.to_dict()
        lines = ["metric                      value"]
        lines.append(f"coverage_ratio              {self.coverage_ratio:.4f}")
        lines.append(f"cutoff_amplitude            {self.cutoff_amplitude:.6f}")
        lines.append(f"f_star [1/mm]               {self.f_star * 1e-3:.4f}")
        lines.append(f"cutoff_reached              {self.cutoff_reached}")
        for name in ("psi", "cfi"):
            s = d[f"radius_{name}"]
            if s["count"]:
                lines.append(f"radius_{name} mean [um]        {s['mean_m'] * 1e6:.3f}")
                lines.append(f"radius_{name} median [um]      {s['median_m'] * 1e6:.3f}")
            lines.append(f"radius_{name} count            {s['count']}")
            lines.append(f"radius_{name} skipped          {d[f'skipped_{name}']}")
        edges = self.histogram_psi[0]
        lines.append("")
        lines.append("radius bin [um]        psi      cfi")
        cfi_counts = self.histogram_cfi[1]
        for i in range(len(edges) - 1):
            c_cfi = cfi_counts[i] if i < len(cfi_counts) else 0
            lines.append(f"{edges[i] * 1e6:7.2f}-{edges[i + 1] * 1e6:<7.2f} {self.histogram_psi[1][i]:9d} {c_cfi:8d}")
        return "\n".join(lines) + "\n"


def compute_report(psi, cfi, wavelength: float, dx: Optional[float] = None, dz: Optional[float] = None,
                   threshold_db: float = -6.0, bin_pixels: float = 2.0) -> MetricsReport:
    """Both measurements on a PSI/CFI pair of the same plane."""
    dx, dz = _pitch(psi, dx, dz)
    cov = coverage_ratio(psi, cfi, wavelength, dx, dz)
    r_psi = radius_fwhm(psi, skeletonize(psi, threshold_db), dx, dz)
    r_cfi = radius_fwhm(cfi, skeletonize(cfi, threshold_db), dx, dz)
    width = bin_pixels * min(dx, dz)
    top = max([r.radii.max() for r in (r_psi, r_cfi) if r.radii.size] or [width])
    return MetricsReport(
        radii_psi=r_psi.radii, radii_cfi=r_cfi.radii,
        histogram_psi=radius_histogram(r_psi.radii, width, top),
        histogram_cfi=radius_histogram(r_cfi.radii, width, top),
        coverage_ratio=cov.ratio, cutoff_amplitude=cov.cutoff_amplitude, f_star=cov.f_star,
        cutoff_reached=cov.reached, skipped_psi=r_psi.skipped, skipped_cfi=r_cfi.skipped,
        bin_width=width,
    )
