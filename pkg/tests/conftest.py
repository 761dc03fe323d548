import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phasesub.model import (AcquisitionConfig, ArrayGeometry, BeamformConfig, BeamGrid,  # noqa: E402
                            PulseSpec, get_preset)
from phasesub.phantom import Phantom, simulate  # noqa: E402


def small_config(n_frames=6, angles_deg=(-5.0, 0.0, 5.0), elements=32, n_samples=320, bits=None):
    return AcquisitionConfig(
        geometry=ArrayGeometry(elements, 36.6e-6),
        pulse=PulseSpec(50e6),
        speed_of_sound=1540.0,
        sampling_freq=125e6,
        prf=750.0 * len(angles_deg),
        steering_angles=tuple(math.radians(a) for a in angles_deg),
        n_frames=n_frames,
        n_samples=n_samples,
        quantization_bits=bits,
    )


def small_grid(nx=21, nz=41, z0=0.5e-3, dx=4.5e-6, dz=3.08e-6):
    return BeamGrid(x0=-(nx // 2) * dx, z0=z0, dx=dx, dz=dz, nx=nx, nz=nz)


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def grid():
    return small_grid()


@pytest.fixture
def bcfg():
    return BeamformConfig()


@pytest.fixture(scope="session")
def desk():
    return get_preset("mouse50_desk")


@pytest.fixture(scope="session")
def small_channel():
    """A few static points plus one slow vessel on the small config."""
    from phasesub.phantom import Vessel
    ph = Phantom(
        vessels=(Vessel((0.0, 0.52e-3), (0.0, 0.62e-3), 8e-6, 2e-3, 4000.0),),
        points=((20e-6, 0.55e-3, 1.0), (-30e-6, 0.58e-3, 0.7)),
        seed=3,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return simulate(ph, small_config())


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def close():
    return rel_err


def with_frames(preset, n):
    return replace(preset.acquisition, n_frames=n)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
