import pytest

from cfaction import MeasureContext, Tower


@pytest.fixture(scope="session")
def tower234():
    return Tower.build((2, 3, 4), 1)


@pytest.fixture(scope="session")
def tower468():
    return Tower.build((4, 6, 8), 1)


@pytest.fixture(scope="session")
def ctx234(tower234):
    return MeasureContext(tower234)
