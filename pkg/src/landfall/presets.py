"""Shipped demonstration scenes, loadable by name."""

from __future__ import annotations

from importlib import resources

from .errors import ConfigError
from .scene import SceneModel, parse_scene_text

PRESET_NAMES = ("scenario1", "scenario2", "city")


def load_preset(name: str) -> SceneModel:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    text = resources.files("landfall.scenarios").joinpath(f"{name}.scene").read_text()
    return parse_scene_text(text, default_id=name)
