import math

import numpy as np
import pytest

from phasesub.beamform import BeamformedStack, beamform_all
from phasesub.errors import PreconditionError
from phasesub.iqfilter import (IQStack, apply_clutter_projection, build_casorati, iq_demodulate,
                               lowpass_taps, passthrough, rejection_bounds, svd_clutter_filter,
                               unfold_casorati)
from phasesub.model import BeamformConfig, BeamGrid

from conftest import small_config


def _tone_stack(freq, nz=200, nf=2):
    cfg = small_config(n_frames=nf)
    grid = BeamGrid(x0=0.0, z0=0.5e-3, dx=1e-5, dz=cfg.rf_axial_pitch / 2, nx=3, nz=nz)
    t = 2 * grid.z / cfg.speed_of_sound
    rf = np.broadcast_to(np.cos(2 * np.pi * freq * t + 0.3)[:, None], (4, nf, nz, 3)).copy()
    return BeamformedStack(rf, grid, cfg, BeamformConfig(), np.ones(grid.shape, bool))


def test_tone_at_demod_freq_is_constant_phase():
    # decimation 4 puts the mixing image (-2 f) in the filter stopband
    st = _tone_stack(50e6, nz=400)
    iq = iq_demodulate(st, 50e6, decim=4).iq[0, 0, :, 1]
    inner = iq[10:-10]
    ph = np.angle(inner)
    assert np.ptp(ph) < 0.01
    assert math.isclose(ph.mean(), 0.3, abs_tol=0.01)
    np.testing.assert_allclose(np.abs(inner), 1.0, atol=0.02)


def test_decimation_shape():
    st = _tone_stack(50e6, nz=201)
    assert iq_demodulate(st, decim=1).iq.shape[2] == 201
    out = iq_demodulate(st, decim=4)
    assert out.iq.shape[2] == math.ceil(201 / 4) == out.grid.nz
    assert math.isclose(out.grid.dz, 4 * st.grid.dz)


def test_decimation_bounds():
    st = _tone_stack(50e6, nz=20)
    with pytest.raises(PreconditionError):
        iq_demodulate(st, decim=0)
    with pytest.raises(PreconditionError):
        iq_demodulate(st, decim=21)


def test_lowpass_is_linear_phase_and_unit_gain():
    h = lowpass_taps(4)
    assert len(h) == 63
    np.testing.assert_allclose(h, h[::-1])
    assert math.isclose(h.sum(), 1.0, rel_tol=1e-12)


def test_mouse50_voxel_arithmetic():
    cfg = small_config()
    assert math.isclose(1540 / (2 * 125e6), 6.16e-6)
    assert math.isclose(cfg.rf_axial_pitch * 2, 12.32e-6)


def _random_iq(nf=10, nz=7, nx=5, seed=0):
    rng = np.random.default_rng(seed)
    iq = rng.standard_normal((4, nf, nz, nx)) + 1j * rng.standard_normal((4, nf, nz, nx))
    grid = BeamGrid(x0=0.0, z0=1e-3, dx=1e-5, dz=1e-5, nx=nx, nz=nz)
    return IQStack(iq, grid, small_config(n_frames=nf), 1, 50e6, np.ones((nz, nx), bool))


def test_casorati_layout_and_round_trip():
    st = _random_iq()
    m = build_casorati(st, 2)
    assert m.shape == (35, 10)
    np.testing.assert_array_equal(m[:, 3], st.iq[2, 3].ravel())
    np.testing.assert_array_equal(unfold_casorati(m, (7, 5)), st.iq[2])
    np.testing.assert_allclose(np.linalg.norm(m, axis=0) ** 2,
                               (np.abs(st.iq[2]) ** 2).sum(axis=(1, 2)))


def test_casorati_toy():
    iq = np.arange(6).reshape(1, 3, 1, 2).astype(complex)
    iq = np.repeat(iq, 4, axis=0)
    st = IQStack(iq, BeamGrid(0.0, 1e-3, 1e-5, 1e-5, 2, 1), small_config(n_frames=3), 1, 50e6,
                 np.ones((1, 2), bool))
    np.testing.assert_array_equal(build_casorati(st, 0), [[0, 2, 4], [1, 3, 5]])


def test_rejection_bounds():
    assert rejection_bounds(100, 0.1, 0.1) == (10, 90)
    assert rejection_bounds(64, 0.1, 0.1) == (6, 58)
    assert rejection_bounds(9, 0.1, 0.1) == (0, 9)
    with pytest.raises(PreconditionError):
        rejection_bounds(10, 0.5, 0.5)


def test_full_retention_is_identity():
    st = _random_iq()
    out = svd_clutter_filter(st, 0.0, 0.0)
    assert np.abs(out.iq - st.iq).max() / np.abs(st.iq).max() < 1e-6
    assert all(r == (0, 10) for r in out.retained)


def test_gram_path_matches_direct_svd(monkeypatch):
    import phasesub.iqfilter as f
    st = _random_iq(nf=20, nz=9, nx=6)
    direct = svd_clutter_filter(st, 0.1, 0.1).iq
    monkeypatch.setattr(f, "_DIRECT_SVD_LIMIT", 0)
    gram = svd_clutter_filter(st, 0.1, 0.1).iq
    np.testing.assert_allclose(gram, direct, atol=1e-9 * np.abs(direct).max())


def test_projection_idempotent():
    st = _random_iq(nf=20)
    once = svd_clutter_filter(st, 0.1, 0.1)
    twice = apply_clutter_projection(once, once.bases)
    assert np.abs(twice.iq - once.iq).max() / np.abs(once.iq).max() < 1e-6


def test_projection_reproduces_filter():
    st = _random_iq(nf=20)
    once = svd_clutter_filter(st, 0.1, 0.1)
    again = apply_clutter_projection(st, once.bases)
    np.testing.assert_allclose(again.iq, once.iq, atol=1e-9 * np.abs(once.iq).max())


def test_energy_split_and_orthogonality():
    st = _random_iq(nf=20)
    out = svd_clutter_filter(st, 0.1, 0.1)
    for a in range(4):
        x = build_casorati(st, a)
        y = build_casorati(out, a)
        s = out.singular_values[a]
        lo, hi = out.retained[a]
        kept = (s[lo:hi] ** 2).sum()
        assert math.isclose(np.linalg.norm(y) ** 2, kept, rel_tol=1e-6)
        assert math.isclose(kept + (s[:lo] ** 2).sum() + (s[hi:] ** 2).sum(), np.linalg.norm(x) ** 2,
                            rel_tol=1e-6)
        u, _, vh = np.linalg.svd(x, full_matrices=False)
        for k in list(range(lo)) + list(range(hi, len(s))):
            comp = np.outer(u[:, k], vh[k])
            assert abs(np.vdot(comp, y)) <= 1e-6 * np.linalg.norm(y)


def test_commutes_with_complex_scaling():
    st = _random_iq(nf=12)
    k = 2.5 * np.exp(0.7j)
    scaled = IQStack(st.iq * k, st.grid, st.config, 1, 50e6, st.coverage)
    np.testing.assert_allclose(svd_clutter_filter(scaled).iq, k * svd_clutter_filter(st).iq,
                               atol=1e-9 * abs(k) * np.abs(st.iq).max())


def test_needs_three_frames():
    with pytest.raises(PreconditionError):
        svd_clutter_filter(_random_iq(nf=2))


def test_passthrough_keeps_data():
    st = _random_iq()
    assert np.array_equal(passthrough(st).iq, st.iq)


def test_frame_subset_drops_bases():
    out = svd_clutter_filter(_random_iq(nf=12))
    assert out.frames(0, 6).bases == ()
    assert out.frames(0, 6).n_frames == 6


def test_filters_static_tissue(small_channel, grid):
    # small_channel holds two static points and one vessel
    st = iq_demodulate(beamform_all(small_channel, grid), decim=2)
    out = svd_clutter_filter(st, 0.2, 0.0)
    assert (np.abs(out.iq) ** 2).sum() < (np.abs(st.iq) ** 2).sum()
