"""Quantum filtering of an atom observed through a cat."""

__version__ = "0.1.0"
