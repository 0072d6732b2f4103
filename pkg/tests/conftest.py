import pytest

from mpptbench.calibration import reference_cell


@pytest.fixture(scope="session")
def cell():
    return reference_cell()
