"""Relativistic Clebsch-variable fluid kinematics and enstrophy/helicity diagnostics."""

__version__ = "0.1.0"
