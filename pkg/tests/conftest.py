import logging
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from carqlink.amc import AmcMode, AmcModeTable, load_mode_table  # noqa: E402
from carqlink.analytic import Scenario  # noqa: E402

logging.getLogger("carqlink").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def table():
    return load_mode_table()


@pytest.fixture(scope="session")
def scenario_10db(table):
    return Scenario.from_db(10.0, 0.0, table=table)


@pytest.fixture(scope="session")
def optimum_10db(scenario_10db):
    from carqlink.optimizer import optimize

    return optimize(scenario_10db)


@pytest.fixture
def toy_mode():
    import math

    return AmcMode(1, 1.0, math.e, 1.0, 1.0)


@pytest.fixture
def two_mode_table():
    return AmcModeTable((AmcMode(1, 1.0, 90.0, 3.5, 1.3), AmcMode(2, 3.0, 53.0, 0.37, 10.6)))
