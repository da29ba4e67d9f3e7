import numpy as np
import pytest

from charpipe.charmesh import CharacterSpec, make_sample_character, save_character
from charpipe.kinematics import save_motion
from charpipe.motions import make_motion
from charpipe.raster import make_default_camera, save_camera


@pytest.fixture(scope="session")
def tiny_character():
    """Low-density character shared across integration tests."""
    return make_sample_character(CharacterSpec(density=0.4, texture_size=64))


@pytest.fixture(scope="session")
def asset_dir(tmp_path_factory, tiny_character):
    """On-disk character + camera + motion assets."""
    root = tmp_path_factory.mktemp("assets")
    mesh, skel = tiny_character
    save_character(mesh, skel, root / "character.obj")
    save_camera(make_default_camera(64, 64), root / "camera64.json")
    save_motion(make_motion("walk", skel, 12, seed=3), root / "walk12.json")
    return root
