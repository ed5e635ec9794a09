"""Evolving QWOP gaits with genetic algorithms against a planar ragdoll surrogate."""

__version__ = "0.1.0"
