import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the oracles module

from tracer.config import DetectorConfig


@pytest.fixture
def cfg() -> DetectorConfig:
    return DetectorConfig()
