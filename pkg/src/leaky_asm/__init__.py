"""Leaky abelian sandpile model: simulation, killed random walks and limit shapes."""

__version__ = "0.1.0"
