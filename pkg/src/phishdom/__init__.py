"""Malicious URL detection from URL text plus page DOM structure."""

__version__ = "0.1.0"
