"""Fiber bundles with connections, from local data."""

__version__ = "0.1.0"
