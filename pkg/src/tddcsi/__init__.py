"""Downlink CSI reconstruction from sparse uplink pilots in non-reciprocal TDD OFDM links."""
from .chanmodel import ChannelClass, DopplerSpec, PowerDelayProfile, load_pdp
from .errors import ConfigError, FormatError, TddcsiError, TrainingDiverged
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "ChannelClass",
    "ConfigError",
    "DopplerSpec",
    "FormatError",
    "KERNEL_BACKEND",
    "PowerDelayProfile",
    "TddcsiError",
    "TrainingDiverged",
    "load_pdp",
]
