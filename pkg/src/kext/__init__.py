"""Holomorphic extension criteria for traces on analytic sets in ball-like domains."""

__version__ = "0.1.0"
