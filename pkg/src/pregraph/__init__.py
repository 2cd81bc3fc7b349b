"""Deterministic simulator and checker for a partially replicated,
precedence-graph-based transaction commit protocol."""

__version__ = "0.1.0"
