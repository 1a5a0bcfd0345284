"""Cost-aware search over flow feature sets and connection depths."""

__version__ = "0.1.0"
