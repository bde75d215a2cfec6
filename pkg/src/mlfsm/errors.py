"""Shared exception base for the toolchain."""

from __future__ import annotations


class MlfsmError(Exception):
    """Base class for every error raised by this package."""
