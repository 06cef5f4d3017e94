"""Excitation trajectory design and dynamic parameter identification."""

__version__ = "0.1.0"

from .chain import KinematicChain, load_urdf, parse_urdf  # noqa: F401
