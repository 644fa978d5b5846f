import json
from pathlib import Path

import pytest

from absteer.operators import build_catalog
from absteer.surrogate import EnvConfig, StateParams

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def env_cfg():
    return EnvConfig(master_seed=42)


@pytest.fixture(scope="session")
def catalog(env_cfg):
    return build_catalog(env_cfg)


@pytest.fixture(scope="session")
def default_params():
    return StateParams()


def load_golden(name: str) -> dict:
    with open(GOLDEN_DIR / name, "r", encoding="utf-8") as fh:
        return json.load(fh)
