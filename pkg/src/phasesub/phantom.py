"""Flow phantoms and the plane-wave channel-data simulator.

The forward model is 2D single scattering: every point scatterer returns a
delayed copy of the transmit pulse to every element, with the plane-wave
transmit delay ``(z cos(theta) + x sin(theta)) / c`` and the receive delay
``|r - r_e| / c``. Blood scatterers advance along their vessel at every
transmit event with a parabolic (Poiseuille) velocity profile.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from . import kernels
from .errors import PreconditionError
from .model import AcquisitionConfig

# RNG stream ids, combined with the phantom seed and an index
_TISSUE_STREAM = 0
_VESSEL_STREAM = 1
_NOISE_STREAM = 2


def _rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed on ``(seed, stream, index)``."""
    key = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stream, index])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class Vessel:
    """Straight vessel segment in the imaging plane.

    Points are ``(x, z)`` in meters. ``peak_velocity`` is signed along
    ``p0 -> p1``. ``scatterer_density`` is in scatterers per mm^2 of the
    vessel's in-plane footprint. Passing ``scatterers`` as
    ``(axial_offset, radial_offset, amplitude)`` triples places them
    explicitly instead of drawing them at random.
    """

    p0: tuple
    p1: tuple
    radius: float
    peak_velocity: float
    scatterer_density: float = 4000.0
    scatterers: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "p0", tuple(float(v) for v in self.p0))
        object.__setattr__(self, "p1", tuple(float(v) for v in self.p1))
        if self.scatterers is not None:
            object.__setattr__(self, "scatterers", tuple(tuple(map(float, s)) for s in self.scatterers))
        if not self.radius > 0:
            raise ValueError("vessel radius must be > 0")
        if self.p0 == self.p1:
            raise ValueError("vessel endpoints must differ")
        if not self.scatterer_density > 0:
            raise ValueError("scatterer_density must be > 0")

    @property
    def length(self) -> float:
        return math.dist(self.p0, self.p1)

    @property
    def axis(self) -> np.ndarray:
        return (np.asarray(self.p1) - np.asarray(self.p0)) / self.length

    @property
    def normal(self) -> np.ndarray:
        u = self.axis
        return np.array([-u[1], u[0]])

    def velocity_at(self, r):
        """Axial speed at distance ``r`` from the centerline."""
        r = np.asarray(r, dtype=float)
        return self.peak_velocity * (1.0 - (r / self.radius) ** 2)

    def to_dict(self) -> dict:
        d = {"p0": list(self.p0), "p1": list(self.p1), "radius": self.radius,
             "peak_velocity": self.peak_velocity, "scatterer_density": self.scatterer_density}
        if self.scatterers is not None:
            d["scatterers"] = [list(s) for s in self.scatterers]
        return d


@dataclass(frozen=True)
class Scatterers:
    positions: np.ndarray   # (N, 2) as (x, z)
    amplitudes: np.ndarray  # (N,)
    velocities: np.ndarray  # (N, 2)
    moving: np.ndarray      # (N,) bool, True for blood

    def __len__(self):
        return len(self.amplitudes)


@dataclass(frozen=True)
class Phantom:
    """Moving blood inside vessels plus static tissue scatterers.

    ``region`` is ``(x_min, x_max, z_min, z_max)`` for the randomly placed
    tissue scatterers; tissue falling inside a vessel lumen is dropped.
    ``points`` adds explicit static scatterers as ``(x, z, amplitude)``.
    ``snr_db`` sets the receive noise against the RMS of the noiseless data
    (``None`` disables noise).
    """

    vessels: tuple = ()
    tissue_scatterer_count: int = 0
    tissue_amplitude: float = 1.0
    blood_amplitude: float = 1.0
    region: tuple = (-1e-3, 1e-3, 0.5e-3, 1.5e-3)
    seed: int = 0
    points: tuple = ()
    snr_db: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "vessels", tuple(self.vessels))
        object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        object.__setattr__(self, "points", tuple(tuple(map(float, p)) for p in self.points))
        if self.tissue_scatterer_count < 0:
            raise ValueError("tissue_scatterer_count must be >= 0")

    @cached_property
    def _static(self):
        rng = _rng(self.seed, _TISSUE_STREAM, 0)
        n = self.tissue_scatterer_count
        x0, x1, z0, z1 = self.region
        xy = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(z0, z1, n)])
        amp = rng.standard_normal(n) * self.tissue_amplitude
        keep = np.ones(n, dtype=bool)
        for v in self.vessels:
            rel = xy - np.asarray(v.p0)
            s = rel @ v.axis
            d = rel @ v.normal
            keep &= ~((s >= 0) & (s <= v.length) & (np.abs(d) <= v.radius))
        xy, amp = xy[keep], amp[keep]
        if self.points:
            pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
            xy = np.vstack([xy, pts[:, :2]])
            amp = np.concatenate([amp, pts[:, 2]])
        return xy, amp

    @cached_property
    def _blood(self):
        """Per-scatterer (vessel index, axial offset, radial offset, amplitude)."""
        idx, s0, d, amp = [], [], [], []
        for i, v in enumerate(self.vessels):
            if v.scatterers is not None:
                arr = np.asarray(v.scatterers, dtype=float).reshape(-1, 3)
                s_i, d_i, a_i = arr[:, 0], arr[:, 1], arr[:, 2]
            else:
                rng = _rng(self.seed, _VESSEL_STREAM, i)
                area_mm2 = 2.0 * v.radius * v.length * 1e6
                n = max(1, int(round(v.scatterer_density * area_mm2)))
                s_i = rng.uniform(0.0, v.length, n)
                d_i = rng.uniform(-v.radius, v.radius, n)
                a_i = rng.standard_normal(n) * self.blood_amplitude
            idx.append(np.full(len(s_i), i))
            s0.append(s_i)
            d.append(d_i)
            amp.append(a_i)
        if not idx:
            empty = np.zeros(0)
            return np.zeros(0, dtype=int), empty, empty, empty
        return np.concatenate(idx), np.concatenate(s0), np.concatenate(d), np.concatenate(amp)

    def blood_at(self, t: float):
        """Blood scatterer positions, amplitudes and velocities at time ``t``."""
        vidx, s0, d, amp = self._blood
        n = len(amp)
        pos = np.zeros((n, 2))
        vel = np.zeros((n, 2))
        for i, v in enumerate(self.vessels):
            m = vidx == i
            speed = v.velocity_at(d[m])
            s = np.mod(s0[m] + speed * t, v.length)
            pos[m] = np.asarray(v.p0) + s[:, None] * v.axis + d[m][:, None] * v.normal
            vel[m] = speed[:, None] * v.axis
        return pos, amp, vel

    def to_dict(self) -> dict:
        return {
            "vessels": [v.to_dict() for v in self.vessels],
            "tissue_scatterer_count": self.tissue_scatterer_count,
            "tissue_amplitude": self.tissue_amplitude,
            "blood_amplitude": self.blood_amplitude,
            "region": list(self.region),
            "seed": self.seed,
            "points": [list(p) for p in self.points],
            "snr_db": self.snr_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Phantom":
        d = dict(d)
        d["vessels"] = tuple(Vessel(**v) for v in d.get("vessels", ()))
        return cls(**d)


def scatterer_positions(phantom: Phantom, t: float) -> Scatterers:
    """All scatterers of ``phantom`` at time ``t``; blood first, then static."""
    if t < 0:
        raise PreconditionError("t must be >= 0")
    bpos, bamp, bvel = phantom.blood_at(t)
    spos, samp = phantom._static
    return Scatterers(
        positions=np.vstack([bpos, spos]),
        amplitudes=np.concatenate([bamp, samp]),
        velocities=np.vstack([bvel, np.zeros_like(spos)]),
        moving=np.concatenate([np.ones(len(bamp), bool), np.zeros(len(samp), bool)]),
    )


def pulse_waveform(t, pulse) -> np.ndarray:
    """Transmit pulse centered on ``t = 0``."""
    t = np.asarray(t, dtype=float)
    T = pulse.duration
    inside = np.abs(t) <= T / 2
    env = 0.5 * (1.0 + np.cos(2 * np.pi * t / T)) if pulse.envelope == "hann" else 1.0
    return np.where(inside, env * np.cos(2 * np.pi * pulse.center_freq * t), 0.0)


@dataclass
class ChannelData:
    """Raw element signals, ``samples[frame, angle, element, sample]``."""

    samples: np.ndarray
    config: AcquisitionConfig
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cfg = self.config
        expected = (cfg.n_frames, cfg.n_angles, cfg.geometry.element_count, cfg.n_samples)
        if self.samples.shape != expected:
            from .errors import DimensionMismatchError
            raise DimensionMismatchError(f"channel data shape {self.samples.shape} != {expected}")


def _in_depth(pos, max_depth):
    return (pos[:, 1] > 0) & (pos[:, 1] <= max_depth)


def simulate(phantom: Phantom, config: AcquisitionConfig, workers: int = 1, backend=None) -> ChannelData:
    """Synthesize channel data for every transmit event of ``config``.

    Event ``k = frame * n_angles + angle`` fires at ``t_k = k / prf`` and sees
    the blood positions at that instant. The output is bit-identical for any
    ``workers`` count.
    """
    kern = kernels.get(backend)
    spos, samp = phantom._static
    _, _, _, bamp = phantom._blood
    if np.isnan(samp).any() or np.isnan(bamp).any():
        raise PreconditionError("scatterer amplitudes must not be NaN")

    geom = config.geometry
    ex = np.ascontiguousarray(geom.element_x, dtype=float)
    c, fs = config.speed_of_sound, config.sampling_freq
    fc, dur = config.pulse.center_freq, config.pulse.duration
    hann = config.pulse.envelope == "hann"
    nf, na, ne, ns = config.n_frames, config.n_angles, geom.element_count, config.n_samples
    max_depth = config.max_depth

    ok = _in_depth(spos, max_depth)
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} static scatterer(s) outside the recorded depth range skipped")
    spos, samp = np.ascontiguousarray(spos[ok]), np.ascontiguousarray(samp[ok])

    static = np.zeros((na, ne, ns))
    for a, theta in enumerate(config.steering_angles):
        kern.simulate_event(spos, samp, ex, theta, c, fs, fc, dur, hann, static[a])

    out = np.empty((nf, na, ne, ns))
    skipped = []

    def run_frames(frames):
        for f in frames:
            for a, theta in enumerate(config.steering_angles):
                k = f * na + a
                pos, amp, _ = phantom.blood_at(k / config.prf)
                keep = _in_depth(pos, max_depth)
                if not keep.all():
                    skipped.append(k)
                out[f, a] = static[a]
                kern.simulate_event(np.ascontiguousarray(pos[keep]), np.ascontiguousarray(amp[keep]),
                                    ex, theta, c, fs, fc, dur, hann, out[f, a])

    _map_chunks(run_frames, nf, workers)
    if skipped:
        warnings.warn(f"blood scatterers outside the recorded depth range skipped in {len(skipped)} event(s)")

    if phantom.snr_db is not None:
        rms = math.sqrt(float(np.mean(out ** 2)))
        sigma = rms * 10.0 ** (-phantom.snr_db / 20.0)
        if sigma > 0:
            def add_noise(frames):
                for f in frames:
                    for a in range(na):
                        out[f, a] += sigma * _rng(phantom.seed, _NOISE_STREAM, f * na + a).standard_normal((ne, ns))
            _map_chunks(add_noise, nf, workers)

    data = ChannelData(out, config)
    if config.quantization_bits is not None:
        data = quantize(data, config.quantization_bits)
    return data


def _map_chunks(fn, n, workers):
    """Run ``fn`` over disjoint index chunks of ``range(n)``."""
    workers = max(1, int(workers))
    if workers == 1 or n == 1:
        fn(range(n))
        return
    chunks = [range(i, n, workers) for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(fn, chunks):
            pass


def quantize(data: ChannelData, bits: int) -> ChannelData:
    """Round onto the signed ``bits``-bit grid spanning the global max |value|.

    The largest magnitude maps to ``2**(bits-1) - 1``. Already-quantized data
    is a fixed point of this map.
    """
    if not 2 <= bits <= 24:
        raise PreconditionError("bits must lie in [2, 24]")
    peak = float(np.max(np.abs(data.samples))) if data.samples.size else 0.0
    cfg = replace(data.config, quantization_bits=bits)
    if peak == 0.0:
        return ChannelData(data.samples.copy(), cfg, dict(data.meta))
    full = 2 ** (bits - 1) - 1
    q = np.rint(data.samples / peak * full)  # full / peak overflows for subnormal peaks
    np.clip(q, -(full + 1), full, out=q)
    return ChannelData(q, cfg, dict(data.meta))
