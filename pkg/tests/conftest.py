"""
File: tests/conftest.py
Description: pytest configuration and fixtures for the distillation toolkit.
"""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from dgkd import create_cli
from dgkd.controllers.dataset_controller import DatasetController
from dgkd.models.model_spec import ModelSpec
from dgkd.models.plan import TrainHyper


@pytest.fixture
def rng():
    """Fixed-seed generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    """Three well separated 2-D clouds, 20 train and 10 test examples per class."""
    return DatasetController.generate_synthetic_dataset(
        "blobs", {"classes": 3, "train_per_class": 20, "test_per_class": 10, "noise": 0.2}, seed=7
    )


@pytest.fixture
def tiny_ladder():
    """mlp ladder 4 -> 3 -> 2 over 2-D inputs with 3 classes."""
    return tuple(ModelSpec("mlp", depth, 3, (2,), (8,)) for depth in (4, 3, 2))


@pytest.fixture
def quick_hyper():
    """Two short epochs; enough to exercise every code path."""
    return TrainHyper(lr=0.05, epochs=2, batch_size=16)


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON configuration document and return its path."""

    def _write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def smoke_config():
    """Smallest runnable experiment document."""
    return {
        "dataset": {
            "kind": "synthetic_blobs",
            "params": {"classes": 3, "train_per_class": 12, "test_per_class": 6, "noise": 0.2},
        },
        "plans": [
            {
                "name": "smoke",
                "mode": "dense",
                "ladder": [
                    {"family": "mlp", "depth": 4, "widths": [6]},
                    {"family": "mlp", "depth": 3, "widths": [6]},
                    {"family": "mlp", "depth": 2, "widths": [6]},
                ],
                "train": {"lr": 0.05, "epochs": 1, "batch_size": 12},
            }
        ],
        "seeds": [0],
    }


@pytest.fixture
def cli():
    """Click group with every command registered."""
    return create_cli()


@pytest.fixture
def runner():
    """Click test runner for invoking commands in-process."""
    return CliRunner()
