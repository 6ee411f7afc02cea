"""HTTP service wrapping the core package for online use."""

from .app import create_app

__all__ = ["create_app"]
