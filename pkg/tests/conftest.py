# ruff: noqa: E402
import os

# Set environment to testing before any other imports
os.environ["FEDREP_ENV"] = "testing"

from pathlib import Path

import numpy as np
import pytest

from src.models.aggregation_models import UpdateSet
from src.models.learning_models import ModelParams
from src.models.scenario_models import ScenarioConfig
from src.services.data_service import prepare_dataset


def scenario(**overrides) -> ScenarioConfig:
    """A desk-sized synthetic scenario; keyword sections are merged into the defaults."""
    document = {
        "seed": 11,
        "runs": 2,
        "rounds": 4,
        "clients": 6,
        "data": {
            "source": "synthetic",
            "synthetic": {"n_train": 1200, "n_test": 400, "n_features": 4},
        },
        "training": {"epochs": 4},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(document.get(key), dict):
            document[key] = {**document[key], **value}
        else:
            document[key] = value
    return ScenarioConfig.model_validate(document)


def updates_from(rows: list[list[float]] | np.ndarray) -> UpdateSet:
    """Each row is a flattened (w..., b) client vector."""
    X = np.asarray(rows, dtype=float)
    return UpdateSet(
        client_ids=list(range(X.shape[0])),
        params=[ModelParams(w=row[:-1].copy(), b=float(row[-1])) for row in X],
    )


@pytest.fixture
def small_scenario() -> ScenarioConfig:
    return scenario()


@pytest.fixture
def small_data(small_scenario):
    return prepare_dataset(small_scenario.data, small_scenario.seed)


@pytest.fixture
def scenario_file(tmp_path: Path) -> Path:
    path = tmp_path / "small.toml"
    path.write_text(
        "\n".join(
            [
                'name = "small"',
                "seed = 3",
                "runs = 2",
                "rounds = 3",
                "clients = 5",
                "",
                "[data.synthetic]",
                "n_train = 600",
                "n_test = 200",
                "n_features = 3",
                "",
                "[training]",
                "epochs = 3",
                "",
                "[attacks]",
                "malicious_fraction = 0.4",
                'kinds = ["sign_flipping", "noise"]',
                "",
            ]
        ),
        encoding="utf-8",
    )
    return path
