import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from barsim.config import DATA_DIR, load_config  # noqa: E402
from barsim.orchestrator import DataBundle  # noqa: E402

SCENARIOS = DATA_DIR / "scenarios"


@pytest.fixture
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def data():
    return DataBundle.load(load_config())
