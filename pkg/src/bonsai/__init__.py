"""Intentional feed builder: planning, sourcing, curation, Borda ranking, serving."""

__version__ = "0.1.0"
