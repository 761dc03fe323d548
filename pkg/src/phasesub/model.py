"""Acquisition geometry, grids and the built-in acquisition presets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import PreconditionError, UnknownPresetError


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear array with elements centered on x = 0."""

    element_count: int
    pitch: float

    def __post_init__(self):
        if self.element_count < 1:
            raise ValueError("element_count must be >= 1")
        if not self.pitch > 0:
            raise ValueError("pitch must be > 0")

    @cached_property
    def element_x(self) -> np.ndarray:
        x = (np.arange(self.element_count) - (self.element_count - 1) / 2.0) * self.pitch
        x.flags.writeable = False
        return x

    @property
    def width(self) -> float:
        return self.element_count * self.pitch


@dataclass(frozen=True)
class PulseSpec:
    center_freq: float
    n_cycles: float = 1.5
    envelope: str = "hann"

    def __post_init__(self):
        if not self.center_freq > 0:
            raise ValueError("center_freq must be > 0")
        if not self.n_cycles > 0:
            raise ValueError("n_cycles must be > 0")
        if self.envelope not in ("hann", "rect"):
            raise ValueError(f"unknown pulse envelope {self.envelope!r}")

    @property
    def duration(self) -> float:
        return self.n_cycles / self.center_freq


@dataclass(frozen=True)
class AcquisitionConfig:
    """Everything that defines one plane-wave acquisition.

    ``steering_angles`` are in radians. ``n_frames`` counts compounded frames
    and ``n_samples`` the fast-time samples recorded per transmit event
    (sample ``n`` is taken at ``t = n / sampling_freq`` after the event).
    """

    geometry: ArrayGeometry
    pulse: PulseSpec
    speed_of_sound: float
    sampling_freq: float
    prf: float
    steering_angles: tuple
    n_frames: int
    n_samples: int
    quantization_bits: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "steering_angles", tuple(float(a) for a in self.steering_angles))
        if not self.steering_angles:
            raise ValueError("at least one steering angle is required")
        if self.speed_of_sound <= 0 or self.sampling_freq <= 0 or self.prf <= 0:
            raise ValueError("speed_of_sound, sampling_freq and prf must be > 0")
        if self.n_frames < 1 or self.n_samples < 1:
            raise ValueError("n_frames and n_samples must be >= 1")

    @property
    def n_angles(self) -> int:
        return len(self.steering_angles)

    @property
    def frame_rate(self) -> float:
        """Compounded frame rate, PRF divided by the number of angles."""
        return self.prf / self.n_angles

    @property
    def wavelength(self) -> float:
        return self.speed_of_sound / self.pulse.center_freq

    @property
    def max_depth(self) -> float:
        """Deepest on-axis depth whose round trip fits in the record."""
        return self.n_samples / self.sampling_freq * self.speed_of_sound / 2.0

    @property
    def rf_axial_pitch(self) -> float:
        """Axial distance spanned by one fast-time sample (round trip)."""
        return self.speed_of_sound / (2.0 * self.sampling_freq)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionConfig":
        d = dict(d)
        d["geometry"] = ArrayGeometry(**d["geometry"])
        d["pulse"] = PulseSpec(**d["pulse"])
        d["steering_angles"] = tuple(d["steering_angles"])
        return cls(**d)


@dataclass(frozen=True)
class BeamGrid:
    """Regular pixel grid; ``(x0, z0)`` is the center of the top-left pixel."""

    x0: float
    z0: float
    dx: float
    dz: float
    nx: int
    nz: int

    def __post_init__(self):
        if not (self.dx > 0 and self.dz > 0):
            raise ValueError("dx and dz must be > 0")
        if self.nx < 1 or self.nz < 1:
            raise ValueError("nx and nz must be >= 1")
        if not self.z0 > 0:
            raise ValueError("z0 must be > 0 (pixels below the array)")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.nz)

    @property
    def shape(self) -> tuple:
        return (self.nz, self.nx)

    @property
    def z_max(self) -> float:
        return self.z0 + self.dz * (self.nz - 1)

    def decimated(self, factor: int) -> "BeamGrid":
        """Grid keeping every ``factor``-th row, starting with the first."""
        return replace(self, dz=self.dz * factor, nz=-(-self.nz // factor))

    @classmethod
    def centered(cls, x_halfwidth, z_start, z_stop, dx, dz) -> "BeamGrid":
        """Grid laterally symmetric about x = 0 covering ``[z_start, z_stop]``."""
        half = int(round(x_halfwidth / dx))
        nz = int(math.floor((z_stop - z_start) / dz + 1e-9)) + 1
        return cls(x0=-half * dx, z0=z_start, dx=dx, dz=dz, nx=2 * half + 1, nz=nz)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BeamformConfig:
    f_number: float = 1.0
    dc_offset: float = 0.32
    interpolation: str = "linear"

    def __post_init__(self):
        if not self.f_number > 0:
            raise ValueError("f_number must be > 0")
        if not 0 < self.dc_offset < 1:
            raise ValueError("dc_offset must lie in (0, 1)")
        if self.interpolation not in ("nearest", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Preset:
    """An acquisition preset and the reconstruction settings that go with it.

    ``decimation`` maps the RF beamforming grid onto the final axial voxel
    size. ``printed_frame_rate`` keeps the published compounded frame rate
    when it disagrees with ``prf / n_angles``; see ``notes``.
    """

    name: str
    acquisition: AcquisitionConfig
    grid: BeamGrid
    beamform: BeamformConfig
    decimation: int = 1
    n_sets: int = 1
    transmit_freq: Optional[float] = None
    printed_frame_rate: Optional[float] = None
    notes: str = ""

    @property
    def frame_rate_mismatch(self) -> bool:
        if self.printed_frame_rate is None:
            return False
        return not math.isclose(self.printed_frame_rate, self.acquisition.frame_rate, rel_tol=1e-3)

    def with_frames(self, n_frames: int) -> "Preset":
        return replace(self, acquisition=replace(self.acquisition, n_frames=n_frames))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "acquisition": self.acquisition.to_dict(),
            "grid": self.grid.to_dict(),
            "beamform": self.beamform.to_dict(),
            "decimation": self.decimation,
            "n_sets": self.n_sets,
            "transmit_freq": self.transmit_freq,
            "printed_frame_rate": self.printed_frame_rate,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Preset":
        d = dict(d)
        d["acquisition"] = AcquisitionConfig.from_dict(d["acquisition"])
        d["grid"] = BeamGrid(**d["grid"])
        d["beamform"] = BeamformConfig(**d["beamform"])
        return cls(**d)


def angle_fan(start_deg: float, stop_deg: float, step_deg: float) -> tuple:
    """Steering angles in radians from ``start_deg`` to ``stop_deg`` inclusive."""
    n = int(round((stop_deg - start_deg) / step_deg)) + 1
    return tuple(math.radians(start_deg + i * step_deg) for i in range(n))


SPEED_OF_SOUND = 1540.0

# (name, used elements, used aperture width [m], center freq, cycles, fs, prf,
#  angle fan in degrees, frames, fast-time samples, bits, lateral voxel,
#  axial voxel after decimation, sets, printed compounded rate)
_FULL_ACQUISITIONS = {
    "mouse50": dict(elements=224, width=8.2e-3, fc=50e6, cycles=1.5, fs=125e6,
                    prf=14250.0, fan=(-9, 9, 1), frames=7500, samples=768, bits=16,
                    dx=4.5e-6, dz=12.32e-6, sets=5, printed=750.0),
    "mouse40": dict(elements=160, width=8.4e-3, fc=41.67e6, cycles=1.5, fs=125e6,
                    prf=12000.0, fan=(-7, 7, 1), frames=4000, samples=1024, bits=16,
                    dx=6.6e-6, dz=12.32e-6, sets=1, printed=800.0),
    "mouse30": dict(elements=128, width=6.8e-3, fc=31.25e6, cycles=1.5, fs=125e6,
                    prf=14400.0, fan=(-18, 18, 4.5), frames=1920, samples=1280, bits=14,
                    dx=6.6e-6, dz=12.32e-6, sets=1, printed=800.0),
    # Pulse-inversion acquisition modeled as a linear one in the receive band
    # (2 x 10.83 MHz); a full transmit cycle spans two receive cycles.
    "rabbit20": dict(elements=256, width=32e-3, fc=2 * 10.83e6, cycles=2.0, fs=62.5e6,
                     prf=33333.0, fan=(-4, 4, 1), frames=300, samples=1664, bits=14,
                     dx=7.8125e-6, dz=24.64e-6, sets=1, printed=1852.0,
                     transmit=10.83e6),
}

_NOTES = {
    "mouse40": "lateral voxel not published for this probe; 6.6 um assumed.",
    "mouse30": "published compounded rate 800 Hz disagrees with prf/angles = 1600 Hz; "
               "derived quantities use prf/angles.",
    "rabbit20": "simulated as a linear acquisition at the 21.66 MHz receive band; published "
                "compounded rate 1852 Hz reflects paired inversion pulses, prf/angles = 3703.7 Hz.",
}

DESK_ELEMENTS = 64


def _full_preset(name: str, p: dict) -> Preset:
    geometry = ArrayGeometry(p["elements"], p["width"] / p["elements"])
    acq = AcquisitionConfig(
        geometry=geometry,
        pulse=PulseSpec(p["fc"], p["cycles"]),
        speed_of_sound=SPEED_OF_SOUND,
        sampling_freq=p["fs"],
        prf=p["prf"],
        steering_angles=angle_fan(*p["fan"]),
        n_frames=p["frames"],
        n_samples=p["samples"],
        quantization_bits=p["bits"],
    )
    decim = int(round(p["dz"] / acq.rf_axial_pitch))
    z_stop = 0.95 * acq.max_depth
    grid = BeamGrid.centered(geometry.width / 2, 0.5e-3, z_stop, p["dx"], acq.rf_axial_pitch)
    return Preset(
        name=name, acquisition=acq, grid=grid, beamform=BeamformConfig(),
        decimation=decim, n_sets=p["sets"], transmit_freq=p.get("transmit"),
        printed_frame_rate=p["printed"], notes=_NOTES.get(name, ""),
    )


def _desk_preset(full: Preset, n_frames: int = 64) -> Preset:
    """64-element variant on a small grid around a mid-aperture depth.

    The RF grid is sampled at half the native axial pitch (decimation doubled)
    so the demodulation low-pass can reject the mixing image; the final axial
    voxel is unchanged.
    """
    acq = full.acquisition
    geometry = ArrayGeometry(DESK_ELEMENTS, acq.geometry.pitch)
    lam = acq.wavelength
    z_center = round(0.45 * geometry.width / 1e-4) * 1e-4
    rf_dz = acq.rf_axial_pitch / 2
    grid = BeamGrid.centered(10 * lam, z_center - 6 * lam, z_center + 6 * lam,
                             full.grid.dx, rf_dz)
    # record long enough for the most oblique round trip to the deepest pixel
    max_sin = max(abs(math.sin(a)) for a in acq.steering_angles)
    far = grid.z_max + grid.x[-1] * max_sin + math.hypot(geometry.width / 2 + grid.x[-1], grid.z_max)
    n_samples = int(math.ceil(far / acq.speed_of_sound * acq.sampling_freq / 32.0 + 1)) * 32
    desk_acq = replace(acq, geometry=geometry, n_frames=n_frames, n_samples=n_samples)
    return replace(full, name=full.name + "_desk", acquisition=desk_acq, grid=grid,
                   decimation=2 * full.decimation, n_sets=1)


def builtin_presets() -> dict:
    """All named presets: the four published acquisitions and their desk variants."""
    presets = {}
    for name, params in _FULL_ACQUISITIONS.items():
        full = _full_preset(name, params)
        presets[name] = full
        desk = _desk_preset(full)
        presets[desk.name] = desk
    return presets


def get_preset(name: str) -> Preset:
    presets = builtin_presets()
    try:
        return presets[name]
    except KeyError:
        raise UnknownPresetError(
            f"unknown preset {name!r}; available: {', '.join(sorted(presets))}"
        ) from None


def subaperture(pixel, geometry: ArrayGeometry, f_number: float) -> range:
    """Elements within ``z / (2 f_number)`` of the pixel's lateral position."""
    x, z = pixel
    if not z > 0:
        raise PreconditionError(f"pixel depth must be > 0, got {z}")
    inside = np.flatnonzero(np.abs(geometry.element_x - x) <= z / (2.0 * f_number))
    if inside.size == 0:
        return range(0)
    return range(int(inside[0]), int(inside[-1]) + 1)


def subaperture_bounds(grid: BeamGrid, geometry: ArrayGeometry, f_number: float):
    """Per-pixel ``[lo, hi)`` element bounds over a whole grid.

    Uses the same comparison as :func:`subaperture` so both agree exactly.
    Empty apertures come back as ``lo == hi == 0``.
    """
    ex = geometry.element_x
    xs = grid.x
    lo = np.zeros(grid.shape, dtype=np.int32)
    hi = np.zeros(grid.shape, dtype=np.int32)
    ne = ex.size
    for iz, z in enumerate(grid.z):
        inside = np.abs(ex[None, :] - xs[:, None]) <= z / (2.0 * f_number)
        any_in = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        last = ne - np.argmax(inside[:, ::-1], axis=1)
        lo[iz] = np.where(any_in, first, 0)
        hi[iz] = np.where(any_in, last, 0)
    return lo, hi
