import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture
def data_dir() -> Path:
    return TESTS_DIR / "data"
