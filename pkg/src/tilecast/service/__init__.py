"""HTTP service wrapping the allocator, simulator, and benchmark."""

from .app import app

__all__ = ["app"]
