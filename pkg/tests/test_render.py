import numpy as np
import pytest

from oracles import read_netpbm
from phasesub.errors import PreconditionError
from phasesub.render import pgm_bytes, ppm_bytes, render


def test_signed_extremes_are_pure_red_and_blue():
    blob, peak = ppm_bytes(np.array([[0.0, 3.0], [-3.0, 0.0]]))
    magic, w, h, maxval, pix = read_netpbm(blob)
    assert (magic, w, h, maxval, peak) == ("P6", 2, 2, 255, 3.0)
    assert pix[0, 1].tolist() == [255, 0, 0]
    assert pix[1, 0].tolist() == [0, 0, 255]
    assert pix[0, 0].tolist() == [0, 0, 0]


def test_pgm_matches_reference_reader():
    rng = np.random.default_rng(2)
    img = rng.standard_normal((5, 7))
    blob, peak = pgm_bytes(img)
    magic, w, h, maxval, pix = read_netpbm(blob)
    assert (magic, w, h, maxval) == ("P5", 7, 5, 65535)
    assert peak == pytest.approx(np.abs(img).max())
    np.testing.assert_array_equal(pix, np.rint(np.abs(img) / peak * 65535))


@pytest.mark.parametrize("scale", [1e-6, 0.5, 7.0, 1e5])
def test_output_invariant_to_positive_scaling(scale):
    img = np.random.default_rng(3).standard_normal((6, 6))
    assert ppm_bytes(img * scale)[0] == ppm_bytes(img)[0]
    assert pgm_bytes(img * scale)[0] == pgm_bytes(img)[0]


def test_all_zero_renders_black(tmp_path):
    p = tmp_path / "z.ppm"
    assert render(np.zeros((3, 4)), p) == 0.0
    _, _, _, _, pix = read_netpbm(p.read_bytes())
    assert not pix.any()


def test_render_styles(tmp_path):
    img = np.arange(6.0).reshape(2, 3) - 2
    render(img, tmp_path / "a.pgm", style="gray")
    assert (tmp_path / "a.pgm").read_bytes()[:2] == b"P5"
    with pytest.raises(PreconditionError, match="style"):
        render(img, tmp_path / "b.png", style="jet")


@pytest.mark.parametrize("bad", [np.array([[np.nan, 1.0]]), np.array([[np.inf]]), np.zeros(4)])
def test_bad_images_rejected(bad):
    with pytest.raises(PreconditionError):
        ppm_bytes(bad)
