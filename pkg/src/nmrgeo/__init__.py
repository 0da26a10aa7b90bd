"""Two-spin NMR simulator for unconventional geometric quantum gates."""

from nmrgeo.quantum import DensityOperator, Operator, StateVector
from nmrgeo.spins import FrameSpec, NoiseConfig, SpinSystem

__all__ = [
    "DensityOperator",
    "FrameSpec",
    "NoiseConfig",
    "Operator",
    "SpinSystem",
    "StateVector",
]

__version__ = "0.1.0"
