"""Finite-stage simulation and verification of priority-method constructions."""

__version__ = "0.1.0"
