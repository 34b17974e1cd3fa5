import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles / gradcheck imports

from mixseg.synthetic import make_blob_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)


@pytest.fixture(scope="session")
def visible_dataset(tmp_path_factory):
    """4 images with a bright blob on a dark background, 64x64."""
    root = tmp_path_factory.mktemp("visible")
    split = make_blob_dataset(root, n_images=4, size=64, seed=11,
                              style="visible", write_depths=False)
    return root, split


@pytest.fixture(scope="session")
def depth_only_dataset(tmp_path_factory):
    """20 images whose RGB carries no figure/ground signal; depth does."""
    root = tmp_path_factory.mktemp("depthonly")
    split = make_blob_dataset(root, n_images=20, size=64, seed=23,
                              style="depth_only", write_depths=True)
    return root, split


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """4 visible-blob images with 16-bit depth files, for pipeline tests."""
    root = tmp_path_factory.mktemp("small")
    split = make_blob_dataset(root, n_images=4, size=64, seed=5,
                              style="visible", write_depths=True)
    return root, split
