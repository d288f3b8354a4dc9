"""Polyatomic CW-complex encodings of molecules and a GP benchmark harness."""

__version__ = "0.1.0"
