"""Road-network monitor placement and fleet economics toolkit."""

__version__ = "0.1.0"
