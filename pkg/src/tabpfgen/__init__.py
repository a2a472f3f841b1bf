"""Class-conditional tabular synthesis by Langevin sampling of a frozen in-context classifier."""

__version__ = "0.1.0"
