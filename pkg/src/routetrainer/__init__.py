"""Adaptive route training: capture, curation, negotiation, guided practice,
and progress indicators for landmark-based pedestrian navigation."""

__version__ = "0.1.0"
