"""Shared fixtures: analytic scenes, panoramas, and single-threaded torch."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from panosplat.geometry import PanoDims
from panosplat.synth import SyntheticScene, synth_scene_panorama

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def room_scene():
    return SyntheticScene.room(seed=0)


@pytest.fixture(scope="session")
def occluder_scene():
    return SyntheticScene.room(seed=0, n_occluders=4)


@pytest.fixture(scope="session")
def room_pano_256(room_scene):
    return synth_scene_panorama(room_scene, PanoDims(256, 128))


@pytest.fixture(scope="session")
def room_pano_512(room_scene):
    return synth_scene_panorama(room_scene, PanoDims(512, 256))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
