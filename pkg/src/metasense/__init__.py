"""Simulation and deployment-optimization toolkit for passive meta-material
wireless sensing.

The package models split-ring-resonator sensor tags whose reflection spectrum
encodes local environmental conditions, simulates multi-device wireless
measurement with mutual interference, optimizes tag placement on room walls
with simulated annealing, and trains an estimator that reconstructs 3D
temperature/humidity fields from received-power matrices.
"""

__version__ = "0.1.0"
