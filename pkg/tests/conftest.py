import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR
