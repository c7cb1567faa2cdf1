"""Paste-driven interactive data integration.

Pasted examples are generalized into extraction rules and candidate
integration queries over a weighted source graph; suggestions are ranked,
explained through per-tuple provenance, and refined from user feedback.
"""

__version__ = "0.1.0"
