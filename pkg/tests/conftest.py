from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracle helpers

from aims.scenario import builtin_pack_path, load_scenario


@pytest.fixture(scope="session")
def pack():
    return load_scenario(builtin_pack_path())


@pytest.fixture
def ed_scene(pack):
    return pack.scene("ed")


@pytest.fixture
def pc_scene(pack):
    return pack.scene("primary_care")


MINIMAL_PACK_YAML = """
version: "0.1"
persona:
  name: Test Patient
  age: 40
scenes:
  - id: only
    title: Only Scene
    fallback_clip: talk
clips:
  - id: talk
    display_label: Talking
    total_frames: 120
    fps: 30
    loopable: true
"""


@pytest.fixture
def minimal_pack():
    return load_scenario(MINIMAL_PACK_YAML)
