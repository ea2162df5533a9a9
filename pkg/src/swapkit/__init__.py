"""Desk-scale face swap toolkit."""

__version__ = "0.1.0"
