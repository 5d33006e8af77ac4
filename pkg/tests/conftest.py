import json
from pathlib import Path

import pytest

from phrasecritic import Dataset, WorldConfig, generate_dataset

TINY = WorldConfig(num_classes=4, scenes_per_class=10, sentences_per_scene=3)

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def load_schema(name: str) -> dict:
    with open(SCHEMA_DIR / f"{name}.schema.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def tiny_config() -> WorldConfig:
    return TINY


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    return generate_dataset(TINY, seed=0)


@pytest.fixture(scope="session")
def taxonomy(tiny_dataset):
    return tiny_dataset.taxonomy


@pytest.fixture(scope="session")
def scene_by_id(tiny_dataset):
    return {s.scene_id: s for s in tiny_dataset.scenes}
