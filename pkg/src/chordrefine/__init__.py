"""Chord recognition refinement: lab timelines, theory rules, staged correction, metrics."""

__version__ = "0.1.0"
