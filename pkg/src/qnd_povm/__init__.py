"""Exact atom-light dephasing dynamics and the QND photon-counting POVM for collective spins."""

__version__ = "0.1.0"
