"""Finite-element simulation of temperature-coupled Cahn-Hilliard-Stokes-heat flow."""

__version__ = "0.1.0"
