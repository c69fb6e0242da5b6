"""Bistatic ISAC multi-target tracking on delay-Doppler graphs."""

__version__ = "0.1.0"
