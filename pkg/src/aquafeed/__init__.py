"""Precision-feeding control plane for tilapia tanks."""

__version__ = "0.1.0"
