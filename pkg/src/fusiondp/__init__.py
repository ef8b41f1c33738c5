"""Feature-level differentially private training on tabular data."""

__version__ = "0.1.0"
