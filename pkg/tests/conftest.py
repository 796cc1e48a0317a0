"""Shared fixtures: small hand-checkable scenes used across the suite."""
from __future__ import annotations

import pytest

from landfall.scene import SceneModel, parse_scene_text

# 12x12 plateau: one 4x4-cell rooftop at elevation 20 over flat ground,
# launch hovering 30 m above the roof deck.
SMOKE_SCENE = """\
landfall-scene v1
name smoke
grid 12 12
cell 4.0
seed 7
char . ground 0
char R rooftop 20
map
............
............
............
............
............
...RRRR.....
...RRRR.....
...RRRR.....
...RRRR.....
............
............
............
endmap
mark roof 3 3 6 6
mark target 3 3 6 6
launch 24 24 50
"""

# Featureless ground, used for descend-only episodes: every round sees one
# giant flat component centered on the principal pixel.
FLATLAND_SCENE = """\
landfall-scene v1
name flatland
grid 16 16
cell 4.0
seed 11
char . ground 0
map
................
................
................
................
................
................
................
................
................
................
................
................
................
................
................
................
endmap
launch 32 32 40
"""


@pytest.fixture
def smoke_scene() -> SceneModel:
    return parse_scene_text(SMOKE_SCENE, "smoke")


@pytest.fixture(scope="session")
def smoke_scene_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scenes") / "smoke.scene"
    path.write_text(SMOKE_SCENE)
    return path


@pytest.fixture
def flatland_scene() -> SceneModel:
    return parse_scene_text(FLATLAND_SCENE, "flatland")
