"""Learned reactive-power control for smart inverters on radial feeders."""

__version__ = "0.1.0"

from .errors import VoltcraftError
from .network import GridState, InverterSpec, Line, NetworkModel, load_network

__all__ = [
    "GridState",
    "InverterSpec",
    "Line",
    "NetworkModel",
    "VoltcraftError",
    "load_network",
]
