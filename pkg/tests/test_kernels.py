import numpy as np
import pytest

from phasesub import kernels
from phasesub.beamform import beamform_all
from phasesub.phantom import Phantom, simulate

BACKENDS = kernels.available()


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_agree_on_simulation(config):
    ph = Phantom(points=((0.0, 0.55e-3, 1.0), (3e-5, 0.6e-3, -0.4)), seed=1)
    a = simulate(ph, config, backend="cython").samples
    b = simulate(ph, config, backend="python").samples
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(b).max())


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
@pytest.mark.parametrize("interp", ["linear", "nearest"])
def test_backends_agree_on_beamforming(small_channel, grid, interp):
    from phasesub.model import BeamformConfig
    bc = BeamformConfig(interpolation=interp)
    a = beamform_all(small_channel, grid, beamform_config=bc, backend="cython").rf
    b = beamform_all(small_channel, grid, beamform_config=bc, backend="python").rf
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12 * np.abs(b).max())


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    results = mod.main(["--frames", "1", "--repeat", "1"])
    assert set(results) == {"simulate", "beamform"}
    assert "beamform" in capsys.readouterr().out
