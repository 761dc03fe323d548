"""Delay-and-sum beamforming under the zero-mean, two dc-offset and rectangle apodizations.

Every pixel gets four samples per frame: ``S_zm``, ``S_dc1``, ``S_dc2`` and
``S_rect``. Each is an inner product of one weight vector with the delayed
subaperture samples, summed over steering angles (coherent compounding).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import EmptyApertureError, PreconditionError
from .model import AcquisitionConfig, BeamformConfig, BeamGrid, subaperture, subaperture_bounds

ZM, DC1, DC2, RECT = range(4)
APODIZATIONS = ("zm", "dc1", "dc2", "rect")


@dataclass(frozen=True)
class ApodizationTriple:
    w_zm: np.ndarray
    w_dc1: np.ndarray
    w_dc2: np.ndarray
    dc_offset: float


def zero_mean_weights(n: int) -> np.ndarray:
    """Odd-symmetric square wave: +1 on the first half, -1 on the last half.

    An odd ``n`` leaves the middle element at zero. Swap this function out to
    try a different zero-mean window.
    """
    half = n // 2
    w = np.zeros(n)
    w[:half] = 1.0
    w[n - half:] = -1.0
    return w


def make_apodizations(n: int, dc_offset: float) -> ApodizationTriple:
    if n < 2:
        raise PreconditionError("a null beam needs at least 2 elements")
    w = zero_mean_weights(n)
    return ApodizationTriple(w_zm=w, w_dc1=w + dc_offset, w_dc2=dc_offset - w, dc_offset=dc_offset)


@dataclass
class BeamformedStack:
    """Real beamformed samples ``rf[apodization, frame, iz, ix]``.

    ``coverage`` marks pixels whose aperture held at least two elements;
    everything else is zero.
    """

    rf: np.ndarray
    grid: BeamGrid
    config: AcquisitionConfig
    beamform: BeamformConfig
    coverage: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.rf.shape[1]

    def __getitem__(self, name):
        return self.rf[APODIZATIONS.index(name)]


def _delays(config: AcquisitionConfig, angle_index: int, x: float, z: float, element: int) -> float:
    theta = config.steering_angles[angle_index]
    xe = config.geometry.element_x[element]
    c = config.speed_of_sound
    return (z * math.cos(theta) + x * math.sin(theta)) / c + math.sqrt((x - xe) ** 2 + z * z) / c


def delay_and_gather(data, frame: int, angle: int, pixel, config: AcquisitionConfig,
                     beamform_config: BeamformConfig) -> np.ndarray:
    """Delay-compensated samples across the subaperture of one pixel.

    Delay indices outside the record contribute 0.
    """
    x, z = pixel
    sub = subaperture(pixel, config.geometry, beamform_config.f_number)
    if len(sub) == 0:
        raise EmptyApertureError(f"no element inside the aperture of pixel ({x}, {z})")
    trace = data.samples[frame, angle]
    ns = trace.shape[-1]
    out = np.zeros(len(sub))
    for j, e in enumerate(sub):
        idx = _delays(config, angle, x, z, e) * config.sampling_freq
        if idx < 0.0 or idx > ns - 1:
            continue
        if beamform_config.interpolation == "linear":
            i0 = int(math.floor(idx))
            frac = idx - i0
            nxt = trace[e, i0 + 1] if i0 + 1 < ns else trace[e, i0]
            out[j] = trace[e, i0] * (1.0 - frac) + nxt * frac
        else:
            out[j] = trace[e, int(math.floor(idx + 0.5))]
    return out


class _FramePlan:
    """Per-grid quantities shared by all frames."""

    def __init__(self, grid, config, beamform_config):
        self.lo, self.hi = subaperture_bounds(grid, config.geometry, beamform_config.f_number)
        self.coverage = (self.hi - self.lo) >= 2
        self.ex = np.ascontiguousarray(config.geometry.element_x, dtype=float)
        self.angles = np.asarray(config.steering_angles, dtype=float)
        self.px = np.ascontiguousarray(grid.x, dtype=float)
        self.pz = np.ascontiguousarray(grid.z, dtype=float)
        self.c = config.speed_of_sound
        self.fs = config.sampling_freq
        self.dc = beamform_config.dc_offset
        self.linear = beamform_config.interpolation == "linear"

    def run(self, kern, frame_rf, out):
        kern.das_frame(np.ascontiguousarray(frame_rf, dtype=float), self.ex, self.angles, self.px,
                       self.pz, self.lo, self.hi, self.c, self.fs, self.dc, self.linear, out)


def _check_grid(grid: BeamGrid, config: AcquisitionConfig):
    if grid.z_max > config.max_depth:
        raise PreconditionError(
            f"grid reaches {grid.z_max * 1e3:.3f} mm but the record covers {config.max_depth * 1e3:.3f} mm"
        )


def beamform_frame(data, frame: int, grid: BeamGrid, config: AcquisitionConfig,
                   beamform_config: BeamformConfig, backend=None, _plan=None):
    """Beamform one frame; returns ``(rf[4, nz, nx], coverage[nz, nx])``."""
    _check_grid(grid, config)
    plan = _plan or _FramePlan(grid, config, beamform_config)
    out = np.zeros((4, grid.nz, grid.nx))
    plan.run(kernels.get(backend), data.samples[frame], out)
    return out, plan.coverage


def beamform_all(data, grid: BeamGrid, config: Optional[AcquisitionConfig] = None,
                 beamform_config: Optional[BeamformConfig] = None, workers: int = 1,
                 backend=None) -> BeamformedStack:
    """Beamform every frame of ``data``. Frames are independent, so the output
    does not depend on ``workers``."""
    config = config or data.config
    beamform_config = beamform_config or BeamformConfig()
    _check_grid(grid, config)
    kern = kernels.get(backend)
    plan = _FramePlan(grid, config, beamform_config)
    nf = data.samples.shape[0]
    rf = np.zeros((4, nf, grid.nz, grid.nx))
    frame_out = [np.zeros((4, grid.nz, grid.nx)) for _ in range(max(1, workers))]

    def run(worker):
        buf = frame_out[worker]
        for f in range(worker, nf, max(1, workers)):
            plan.run(kern, data.samples[f], buf)
            rf[:, f] = buf

    if workers <= 1:
        run(0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(workers)))
    return BeamformedStack(rf=rf, grid=grid, config=config, beamform=beamform_config,
                           coverage=plan.coverage)
