"""Numerics for Diophantine approximation of rational points under several height functions."""
__version__ = "0.1.0"
