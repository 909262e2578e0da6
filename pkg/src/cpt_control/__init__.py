"""Optical CPT control of group-IV color-center spins."""

__version__ = "0.1.0"
