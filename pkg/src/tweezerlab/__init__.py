"""Simulation toolkit for tweezer-based exchange gates, three-photon qubit
rotations and CHSH Bell tests with group-II-like atoms."""

__version__ = "0.1.0"
