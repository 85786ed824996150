from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def maskcorpus_root() -> Path:
    return FIXTURES / "maskcorpus"


@pytest.fixture(scope="session")
def replayproj_root() -> Path:
    return FIXTURES / "replayproj"


@pytest.fixture(scope="session")
def failproj_root() -> Path:
    return FIXTURES / "failproj"
