"""Elastic scattering by rough random potentials and recovery of their microlocal strength."""

__version__ = "0.1.0"
