#!/usr/bin/env python
# this_file: tests/conftest.py
"""Shared fixtures for the actkit test suite."""

import numpy as np
import pytest

import actkit


@pytest.fixture
def rng():
    """Fixed generator so every test is reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_encoder():
    """A 6 → 8 → 8 → 3 encoder with unit-sphere outputs."""
    return actkit.init_params(6, 3, 8, 2, seed=7)


@pytest.fixture
def aug_set():
    """Three fixed transforms on 6-dimensional inputs."""
    return actkit.AugmentationSet.from_specs([("noise", 0.2, 1), ("mask", 0.34, 2), ("smooth", 0.5, 3)], 6)


@pytest.fixture
def tiny_config_text(tmp_path):
    """A fast experiment file writing into a temporary directory."""
    return f"""
seed = 3
d = 6
K = 3
n_s = 96
n_t = 30
n_test = 30
class_radius = 0.5
center_separation = 2.0
width = 8
depth = 1
d_star = 3
epochs = 3
batch_size = 32
augmentations = noise:0.1:1, mask:0.2:2
knn_k = 3
quality_per_class = 6
epsilon_count = 4
output_dir = {tmp_path / "run"}
"""
