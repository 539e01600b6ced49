"""Learned internal models, bidirectional planning and gesture synthesis for simulated hands."""

__version__ = "0.1.0"
