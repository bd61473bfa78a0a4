"""Fault-tolerance analysis of GKP-qubit cluster states built with noisy QND gates."""
__version__ = "0.1.0"
