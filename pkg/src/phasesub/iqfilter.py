"""IQ demodulation along depth and SVD spatiotemporal clutter filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .beamform import BeamformedStack
from .errors import PhaseSubError, PreconditionError
from .model import AcquisitionConfig, BeamGrid

FIR_TAPS = 63

# Above this many Casorati entries the filter projects through the
# frames x frames Gram matrix instead of a thin SVD of the data itself.
_DIRECT_SVD_LIMIT = 20_000_000


@dataclass
class IQStack:
    """Complex baseband samples ``iq[apodization, frame, iz, ix]`` on ``grid``."""

    iq: np.ndarray
    grid: BeamGrid
    config: AcquisitionConfig
    decimation: int
    demod_freq: float
    coverage: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.iq.shape[1]

    def frames(self, start: int, stop: int) -> "IQStack":
        return replace(self, iq=self.iq[:, start:stop])


@dataclass
class FilteredIQStack(IQStack):
    """Clutter-filtered IQ. ``retained[a] = (lo, hi)`` gives the kept
    singular-value indices of apodization ``a``; ``singular_values[a]`` the full
    spectrum before rejection. ``bases[a]`` holds the kept right singular
    vectors (kept x frames), i.e. the slow-time subspace the data were
    projected onto; it is not persisted."""

    retained: tuple = ()
    singular_values: tuple = ()
    bases: tuple = ()

    def frames(self, start: int, stop: int) -> "FilteredIQStack":
        # a frame subset no longer matches the slow-time bases
        return replace(self, iq=self.iq[:, start:stop], bases=())


def lowpass_taps(decim: int, taps: int = FIR_TAPS) -> np.ndarray:
    """Hann-windowed sinc with cutoff at 0.8 of the post-decimation Nyquist."""
    return signal.firwin(taps, 0.8 / decim, window="hann")


def iq_demodulate(stack: BeamformedStack, demod_freq: Optional[float] = None, decim: int = 1) -> IQStack:
    """Mix each axial line to baseband, low-pass, and keep every ``decim``-th row.

    The mixing phase uses the round-trip time ``2 z / c`` of each pixel, and
    the symmetric FIR is applied centered, so no phase is added.
    """
    grid = stack.grid
    if decim < 1:
        raise PreconditionError("decimation must be >= 1")
    if decim > grid.nz:
        raise PreconditionError(f"decimation {decim} exceeds the {grid.nz} axial pixels")
    if demod_freq is None:
        demod_freq = stack.config.pulse.center_freq
    if not demod_freq > 0:
        raise PreconditionError("demodulation frequency must be > 0")
    t_axial = 2.0 * grid.z / stack.config.speed_of_sound
    mixer = np.exp(-2j * np.pi * demod_freq * t_axial)[:, None]
    mixed = stack.rf * mixer
    h = lowpass_taps(decim)
    re = ndimage.convolve1d(mixed.real, h, axis=2, mode="constant")
    im = ndimage.convolve1d(mixed.imag, h, axis=2, mode="constant")
    iq = 2.0 * (re + 1j * im)[:, :, ::decim]
    return IQStack(iq=iq, grid=grid.decimated(decim), config=stack.config, decimation=decim,
                   demod_freq=float(demod_freq), coverage=stack.coverage[::decim])


def build_casorati(iq: IQStack, apod: int) -> np.ndarray:
    """Pixels x frames matrix; column ``n`` is frame ``n`` flattened z-major."""
    if iq.iq.size == 0:
        raise PreconditionError("empty IQ stack")
    frames = iq.iq[apod]
    return frames.reshape(frames.shape[0], -1).T


def unfold_casorati(matrix: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`build_casorati` for one apodization."""
    return matrix.T.reshape((matrix.shape[1],) + tuple(shape))


def rejection_bounds(k: int, low_frac: float, high_frac: float):
    """Kept singular-value index range ``[lo, hi)`` out of ``k``."""
    lo = math.floor(round(low_frac * k, 9))
    hi = k - math.floor(round(high_frac * k, 9))
    if not 0 <= lo < hi <= k:
        raise PreconditionError(f"rejection fractions ({low_frac}, {high_frac}) leave no singular values of {k}")
    return lo, hi


def _project(casorati: np.ndarray, low_frac: float, high_frac: float):
    if casorati.size <= _DIRECT_SVD_LIMIT:
        u, s, vh = np.linalg.svd(casorati, full_matrices=False)
        lo, hi = rejection_bounds(len(s), low_frac, high_frac)
        return (u[:, lo:hi] * s[lo:hi]) @ vh[lo:hi], s, (lo, hi), vh[lo:hi]
    gram = casorati.conj().T @ casorati
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    s = np.sqrt(np.clip(evals[order], 0.0, None))
    v = evecs[:, order]
    k = min(casorati.shape)
    s, v = s[:k], v[:, :k]
    lo, hi = rejection_bounds(k, low_frac, high_frac)
    keep = v[:, lo:hi]
    return (casorati @ keep) @ keep.conj().T, s, (lo, hi), keep.conj().T


def svd_clutter_filter(iq: IQStack, low_frac: float = 0.10, high_frac: float = 0.10) -> FilteredIQStack:
    """Reject the first ``low_frac`` (tissue) and last ``high_frac`` (noise)
    singular components of each apodization's Casorati matrix separately."""
    nf = iq.n_frames
    if nf < 3:
        raise PreconditionError(f"SVD clutter filter needs at least 3 frames, got {nf}")
    shape = iq.iq.shape[2:]
    out = np.empty_like(iq.iq)
    retained, spectra, bases = [], [], []
    for a in range(iq.iq.shape[0]):
        try:
            filtered, s, bounds, basis = _project(build_casorati(iq, a), low_frac, high_frac)
        except np.linalg.LinAlgError as exc:
            raise PhaseSubError(f"SVD did not converge for apodization {a}: {exc}") from exc
        out[a] = unfold_casorati(filtered, shape)
        retained.append(bounds)
        spectra.append(s)
        bases.append(basis)
    return FilteredIQStack(iq=out, grid=iq.grid, config=iq.config, decimation=iq.decimation,
                           demod_freq=iq.demod_freq, coverage=iq.coverage, retained=tuple(retained),
                           singular_values=tuple(spectra), bases=tuple(bases))


def apply_clutter_projection(iq: IQStack, bases) -> FilteredIQStack:
    """Project each apodization's slow-time signals onto a kept subspace.

    ``bases`` is the ``bases`` attribute of an earlier filter result. The
    projection is idempotent: applying it to its own output changes nothing.
    Re-running :func:`svd_clutter_filter` is not, since the fractions are
    taken of a fresh decomposition each time.
    """
    if len(bases) != iq.iq.shape[0]:
        raise PreconditionError(f"{len(bases)} bases for {iq.iq.shape[0]} apodizations")
    shape = iq.iq.shape[2:]
    out = np.empty_like(iq.iq)
    for a, vh in enumerate(bases):
        if vh.shape[1] != iq.n_frames:
            raise PreconditionError(f"basis spans {vh.shape[1]} frames, stack has {iq.n_frames}")
        cas = build_casorati(iq, a)
        out[a] = unfold_casorati((cas @ vh.conj().T) @ vh, shape)
    retained = getattr(iq, "retained", ()) or tuple((0, vh.shape[0]) for vh in bases)
    return FilteredIQStack(iq=out, grid=iq.grid, config=iq.config, decimation=iq.decimation,
                           demod_freq=iq.demod_freq, coverage=iq.coverage, retained=retained,
                           singular_values=getattr(iq, "singular_values", ()), bases=tuple(bases))


def passthrough(iq: IQStack) -> FilteredIQStack:
    """Wrap unfiltered IQ as a filtered stack (clutter filter disabled)."""
    k = min(iq.n_frames, int(np.prod(iq.iq.shape[2:])))
    return FilteredIQStack(iq=iq.iq.copy(), grid=iq.grid, config=iq.config, decimation=iq.decimation,
                           demod_freq=iq.demod_freq, coverage=iq.coverage,
                           retained=tuple((0, k) for _ in range(iq.iq.shape[0])), singular_values=())
