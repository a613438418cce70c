"""Max-min user energy efficiency optimization for STAR-RIS assisted downlinks."""

from .ao_driver import AoConfig, SolveReport, alternating_optimize
from .channel import ChannelSet, Geometry, default_geometry, generate_instance
from .system_model import (
    BeamformerSet,
    PowerModel,
    StarCoefficients,
    SystemDims,
    SystemInstance,
    UserSideLabels,
    dbm_to_watt,
)

__version__ = "0.1.0"

__all__ = [
    "AoConfig",
    "BeamformerSet",
    "ChannelSet",
    "Geometry",
    "PowerModel",
    "SolveReport",
    "StarCoefficients",
    "SystemDims",
    "SystemInstance",
    "UserSideLabels",
    "alternating_optimize",
    "dbm_to_watt",
    "default_geometry",
    "generate_instance",
    "__version__",
]
