"""Sudden-landing recovery pipeline with a deterministic desk-scale urban simulator."""

__version__ = "0.1.0"
