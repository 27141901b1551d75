"""Shared fixtures: a seeded toy-16 model and synthetic faces."""

from __future__ import annotations

import numpy as np
import pytest

from plqlab.facemodel import build_reference, make_dataset, save
from plqlab.fiq import FiqConfig
from plqlab.imageio import quantize, write_image
from plqlab.logs import configure_logging


@pytest.fixture(scope="session", autouse=True)
def _logging():
    configure_logging()


@pytest.fixture(scope="session")
def model():
    return build_reference(seed=0)


@pytest.fixture(scope="session")
def faces():
    return make_dataset(identities=3, samples_per_identity=2, seed=0)


@pytest.fixture
def face(faces):
    """One synthetic face, already on the 8-bit grid."""
    return quantize(faces[0].image).astype(np.float64) / 255.0


@pytest.fixture
def fast_config():
    return FiqConfig(m=20, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def model_file(tmp_path, model):
    return save(model, tmp_path / "toy.plqm")


@pytest.fixture
def corpus_dir(tmp_path, faces):
    directory = tmp_path / "corpus"
    for sample in faces[:3]:
        write_image(sample.image, directory / f"{sample.image_id}.ppm")
    return directory
