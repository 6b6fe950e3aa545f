"""Desk-scale video person re-identification with a temporal
attribute-appearance network, built on a minimal numpy autodiff engine."""

__version__ = "0.1.0"
