import math
import warnings

import numpy as np
import pytest

from phasesub.errors import DimensionMismatchError, PreconditionError
from phasesub.model import PulseSpec
from phasesub.phantom import (ChannelData, Phantom, Vessel, pulse_waveform, quantize, scatterer_positions,
                              simulate)

from conftest import small_config


def _one(offset_r, peak=10e-3, radius=20e-6):
    v = Vessel((0.0, 1e-3), (0.0, 3e-3), radius, peak, scatterers=((0.1e-3, offset_r, 1.0),))
    return Phantom(vessels=(v,))


def _displacement(ph, t):
    return scatterer_positions(ph, t).positions[0, 1] - scatterer_positions(ph, 0.0).positions[0, 1]


def test_centerline_scatterer_moves_at_peak():
    assert math.isclose(_displacement(_one(0.0), 0.1), 1e-3, rel_tol=1e-12)


def test_wall_scatterer_is_still():
    ph = _one(20e-6)
    for t in (0.01, 0.1, 1.0):
        assert abs(_displacement(ph, t)) < 1e-15


def test_half_radius_scatterer_moves_at_three_quarters():
    assert math.isclose(_displacement(_one(10e-6), 0.1), 0.75e-3, rel_tol=1e-12)


def test_blood_wraps_inside_vessel():
    v = Vessel((0.0, 1e-3), (0.0, 1.2e-3), 10e-6, 5e-3, 4000.0)
    ph = Phantom(vessels=(v,), seed=4)
    for t in (0.0, 0.013, 0.5, 3.7):
        pos, _, vel = ph.blood_at(t)
        assert np.all((pos[:, 1] >= 1e-3) & (pos[:, 1] <= 1.2e-3))
        assert np.all(np.abs(pos[:, 0]) <= 10e-6 + 1e-18)
        assert np.all(vel[:, 0] == 0)


def test_negative_time_rejected():
    with pytest.raises(PreconditionError):
        scatterer_positions(_one(0.0), -1.0)


def test_vessel_validation():
    with pytest.raises(ValueError):
        Vessel((0, 0), (0, 0), 1e-6, 0.0)
    with pytest.raises(ValueError):
        Vessel((0, 0), (0, 1e-3), 0.0, 0.0)
    with pytest.raises(ValueError):
        Vessel((0, 0), (0, 1e-3), 1e-6, 0.0, scatterer_density=0.0)


def test_seeded_layout_reproducible_and_seed_sensitive():
    kw = dict(vessels=(Vessel((0, 1e-3), (0, 2e-3), 1e-5, 1e-3),), tissue_scatterer_count=50)
    a, b, c = Phantom(seed=9, **kw), Phantom(seed=9, **kw), Phantom(seed=10, **kw)
    np.testing.assert_array_equal(scatterer_positions(a, 0.2).positions, scatterer_positions(b, 0.2).positions)
    assert not np.array_equal(scatterer_positions(a, 0.0).positions, scatterer_positions(c, 0.0).positions)


def test_pulse_waveform_peak_and_support():
    p = PulseSpec(50e6, 1.5)
    assert pulse_waveform(0.0, p) == 1.0
    assert pulse_waveform(p.duration, p) == 0.0


def _echo_center(samples, fs):
    """Envelope-weighted centroid of a real trace, in seconds."""
    w = samples ** 2
    return float((np.arange(len(samples)) * w).sum() / w.sum() / fs)


def test_on_axis_two_way_delay():
    cfg = small_config(angles_deg=(0.0,), n_frames=1, elements=33, n_samples=640)
    data = simulate(Phantom(points=((0.0, 1e-3, 1.0),)), cfg)
    center = data.config.geometry.element_count // 2
    t = _echo_center(data.samples[0, 0, center], cfg.sampling_freq)
    assert abs(t - 2e-3 / 1540.0) < 0.5 / cfg.sampling_freq


def test_steered_transmit_delay():
    cfg = small_config(angles_deg=(9.0,), n_frames=1, elements=33, n_samples=640)
    data = simulate(Phantom(points=((0.0, 1e-3, 1.0),)), cfg)
    t = _echo_center(data.samples[0, 0, 16], cfg.sampling_freq)
    tau_tx = 1e-3 * math.cos(math.radians(9.0)) / 1540.0
    assert math.isclose(tau_tx, 0.64136e-6, rel_tol=1e-5)
    assert abs(t - (tau_tx + 1e-3 / 1540.0)) < 0.5 / cfg.sampling_freq


def test_empty_phantom_gives_zero_data(config):
    assert not simulate(Phantom(), config).samples.any()


def test_nan_amplitude_rejected(config):
    with pytest.raises(PreconditionError):
        simulate(Phantom(points=((0.0, 1e-3, float("nan")),)), config)


def test_out_of_depth_scatterer_warns_and_is_skipped(config):
    with pytest.warns(UserWarning, match="outside"):
        data = simulate(Phantom(points=((0.0, 10.0, 1.0),)), config)
    assert not data.samples.any()


def test_superposition(config):
    a = Phantom(points=((0.0, 0.6e-3, 1.0),), vessels=(Vessel((0, 0.5e-3), (0, 0.7e-3), 8e-6, 3e-3, 2000.0),), seed=2)
    b = Phantom(points=((4e-5, 0.65e-3, -0.5),), tissue_scatterer_count=20, region=(-1e-4, 1e-4, 5e-4, 7e-4), seed=5)
    # b's random tissue is reproduced explicitly so the union is exact
    tissue_xy, tissue_amp = b._static
    both = Phantom(points=a.points + tuple((x, z, s) for (x, z), s in zip(tissue_xy, tissue_amp)),
                   vessels=a.vessels, seed=2)
    sa, sb, sab = (simulate(p, config).samples for p in (a, b, both))
    np.testing.assert_allclose(sab, sa + sb, rtol=0, atol=1e-9 * np.abs(sab).max())


def test_worker_count_does_not_change_output(config):
    ph = Phantom(vessels=(Vessel((0, 0.5e-3), (0, 0.7e-3), 8e-6, 3e-3, 2000.0),),
                 tissue_scatterer_count=30, region=(-1e-4, 1e-4, 5e-4, 7e-4), seed=11, snr_db=20.0)
    a = simulate(ph, config, workers=1).samples
    b = simulate(ph, config, workers=3).samples
    assert a.tobytes() == b.tobytes()


def test_quantize_full_scale_16_bits(config):
    samples = np.zeros((config.n_frames, config.n_angles, config.geometry.element_count, config.n_samples))
    samples[0, 0, 0, :4] = [1.0, -1.0, 0.5, -0.25]
    q = quantize(ChannelData(samples, config), 16)
    assert q.samples[0, 0, 0, 0] == 32767
    assert q.samples.min() >= -32768 and q.samples.max() <= 32767
    assert q.config.quantization_bits == 16


def test_quantize_14_bits_range_and_idempotent(small_channel):
    q = quantize(small_channel, 14)
    assert q.samples.min() >= -8192 and q.samples.max() <= 8191
    assert np.array_equal(q.samples, np.rint(q.samples))
    assert np.array_equal(quantize(q, 14).samples, q.samples)


def test_quantize_all_zero_unchanged(config):
    z = ChannelData(np.zeros((config.n_frames, config.n_angles, config.geometry.element_count,
                              config.n_samples)), config)
    assert not quantize(z, 12).samples.any()


def test_quantize_bits_range(small_channel):
    with pytest.raises(PreconditionError):
        quantize(small_channel, 1)
    with pytest.raises(PreconditionError):
        quantize(small_channel, 25)


def test_channel_shape_checked(config):
    with pytest.raises(DimensionMismatchError):
        ChannelData(np.zeros((1, 2, 3, 4)), config)


def test_preset_quantization_applied():
    cfg = small_config(bits=14)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate(Phantom(points=((0.0, 0.6e-3, 1.0),)), cfg)
    assert np.abs(data.samples).max() == 8191
