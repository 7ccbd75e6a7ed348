"""HTTP service wrapping the training toolkit."""

from .app import create_app

__all__ = ["create_app"]
