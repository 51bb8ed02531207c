"""Desk-scale semantic search by distilling a cross-encoder judge into a
bi-encoder student with attention pooling and an interaction head."""

__version__ = "0.1.0"
