"""Phase subtraction imaging for super-resolved ultrasound flow maps."""

__version__ = "0.1.0"

from .beamform import beamform_all
from .iqfilter import iq_demodulate, svd_clutter_filter
from .model import BeamformConfig, BeamGrid, get_preset
from .phantom import Phantom, Vessel, simulate
from .psi import cfi_from_stack, psi_from_stack

__all__ = [
    "__version__", "BeamformConfig", "BeamGrid", "Phantom", "Vessel", "beamform_all",
    "cfi_from_stack", "get_preset", "iq_demodulate", "psi_from_stack", "simulate",
    "svd_clutter_filter",
]
