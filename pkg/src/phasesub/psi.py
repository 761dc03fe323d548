"""Phase subtraction imaging and the color-flow baseline.

All phase maps are sums over consecutive frame pairs of principal-value
angles, in radians. No unwrapping across pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .beamform import DC1, DC2, RECT, ZM
from .errors import PreconditionError
from .model import AcquisitionConfig, BeamGrid

KINDS = ("psi", "cfi", "precursor_a", "precursor_b")


@dataclass
class PhaseTerms:
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    p4: np.ndarray
    n_pairs: int

    def __add__(self, other: "PhaseTerms") -> "PhaseTerms":
        return PhaseTerms(self.p1 + other.p1, self.p2 + other.p2, self.p3 + other.p3,
                          self.p4 + other.p4, self.n_pairs + other.n_pairs)


@dataclass
class PhaseImage:
    values: np.ndarray
    kind: str
    grid: Optional[BeamGrid] = None
    config: Optional[AcquisitionConfig] = None
    n_pairs: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown phase image kind {self.kind!r}")


def principal_angle(z: np.ndarray) -> np.ndarray:
    """Angle in ``(-pi, pi]``; exactly-zero values give 0."""
    ang = np.angle(z)
    ang[ang == -np.pi] = np.pi
    ang[z == 0] = 0.0
    return ang


def pair_angles(a: np.ndarray, b: np.ndarray, negate_b: bool = False) -> np.ndarray:
    """Per-pair ``arg(a[n] * conj(s * b[n+1]))`` with ``s = -1`` if ``negate_b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise PreconditionError(f"frame sequences differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] < 2:
        raise PreconditionError("no frame pairs")
    nxt = -b[1:] if negate_b else b[1:]
    return principal_angle(a[:-1] * np.conj(nxt))


def pairwise_phase(a, b, negate_b: bool = False) -> np.ndarray:
    """Accumulated relative phase between ``a[n]`` and ``b[n+1]`` over all pairs."""
    angles = pair_angles(a, b, negate_b)
    acc = np.zeros(angles.shape[1:])
    for n in range(angles.shape[0]):
        acc += angles[n]
    return acc


def phase_terms(filtered, symmetrize: bool = False) -> PhaseTerms:
    """The four relative-phase sums feeding the two precursors.

    Signs follow the published equations: the zero-mean beam is negated in
    the fourth term but not in the third. ``symmetrize=True`` negates it in
    the third term as well.
    """
    iq = filtered.iq if hasattr(filtered, "iq") else filtered
    zm, dc1, dc2 = iq[ZM], iq[DC1], iq[DC2]
    terms = PhaseTerms(
        p1=pairwise_phase(dc1, dc2, negate_b=True),
        p2=pairwise_phase(dc2, dc1, negate_b=True),
        p3=pairwise_phase(dc1, zm, negate_b=symmetrize),
        p4=pairwise_phase(dc2, zm, negate_b=True),
        n_pairs=iq.shape[1] - 1,
    )
    mask = getattr(filtered, "coverage", None)
    if mask is not None:
        for name in ("p1", "p2", "p3", "p4"):
            getattr(terms, name)[~mask] = 0.0
    return terms


def accumulate(terms_per_set) -> PhaseTerms:
    """Sum phase terms of separately processed frame sets of one plane."""
    terms_per_set = list(terms_per_set)
    if not terms_per_set:
        raise PreconditionError("no frame sets to accumulate")
    total = terms_per_set[0]
    for t in terms_per_set[1:]:
        total = total + t
    return total


def psi_image(terms: PhaseTerms, grid=None, config=None):
    """Return ``(psi, precursor_a, precursor_b)`` phase images."""
    pre_a = terms.p1 + terms.p2
    pre_b = terms.p3 + terms.p4
    common = dict(grid=grid, config=config, n_pairs=terms.n_pairs)
    return (PhaseImage(pre_b - pre_a, "psi", **common),
            PhaseImage(pre_a, "precursor_a", **common),
            PhaseImage(pre_b, "precursor_b", **common))


def cfi_image(filtered_rect, grid=None, config=None, coverage=None) -> PhaseImage:
    """Accumulated lag-one phase of the rectangle-apodized beam."""
    if hasattr(filtered_rect, "iq"):
        grid = grid or filtered_rect.grid
        config = config or filtered_rect.config
        coverage = filtered_rect.coverage if coverage is None else coverage
        filtered_rect = filtered_rect.iq[RECT]
    values = pairwise_phase(filtered_rect, filtered_rect)
    if coverage is not None:
        values[~coverage] = 0.0
    return PhaseImage(values, "cfi", grid=grid, config=config, n_pairs=filtered_rect.shape[0] - 1)


def psi_from_stack(filtered, n_sets: int = 1, symmetrize: bool = False):
    """PSI and precursors for a filtered stack, accumulated over ``n_sets``
    equal consecutive frame sets."""
    terms = accumulate(phase_terms(s, symmetrize) for s in split_sets(filtered, n_sets))
    return psi_image(terms, grid=filtered.grid, config=filtered.config)


def cfi_from_stack(filtered, n_sets: int = 1) -> PhaseImage:
    images = [cfi_image(s) for s in split_sets(filtered, n_sets)]
    total = images[0]
    for im in images[1:]:
        total = replace(total, values=total.values + im.values, n_pairs=total.n_pairs + im.n_pairs)
    return total


def split_sets(stack, n_sets: int):
    nf = stack.n_frames
    if n_sets < 1 or nf % n_sets:
        raise PreconditionError(f"{nf} frames cannot be split into {n_sets} equal sets")
    size = nf // n_sets
    return [stack.frames(i * size, (i + 1) * size) for i in range(n_sets)]
