"""Shared exception types so the CLI can map failures to exit codes."""

from __future__ import annotations


class LandfallError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(LandfallError):
    """Invalid configuration, scene file, or command usage."""


class OutOfBoundsError(LandfallError):
    """A pose or world point lies outside the scene."""


class CollisionError(LandfallError):
    """The camera pose is at or below the terrain it stands over."""


class TraceError(LandfallError):
    """An episode trace is malformed or inconsistent."""
