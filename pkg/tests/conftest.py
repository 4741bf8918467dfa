import datetime as dt

import numpy as np
import pytest

from sikjforest.config import load_config, toy_config_path
from sikjforest.core_data import RegionSeries, adjust_for_reporting
from sikjforest.io import ingest, read_populations
from sikjforest.pipeline import GridSpec, Season

SUNDAY = dt.date(2022, 1, 2)


def epidemic(n, peak=60, height=40.0, width=18.0, floor=1.0):
    t = np.arange(n)
    return floor + height * np.exp(-0.5 * ((t - peak) / width) ** 2)


def make_series(region="r1", values=None, start=SUNDAY, population=1_000_000, **kw):
    if values is None:
        values = epidemic(120)
    return RegionSeries(region, population, start, values, **kw)


@pytest.fixture
def series():
    return make_series()


@pytest.fixture(scope="session")
def toy_config():
    return load_config(toy_config_path())


@pytest.fixture(scope="session")
def toy_history(toy_config):
    pops = read_populations(toy_config.populations_path)
    raw = ingest(toy_config.data_path, toy_config.schema, pops)
    return {r: adjust_for_reporting(s) for r, s in raw.items()}


@pytest.fixture
def small_grid():
    return GridSpec(alphas=(0.9, 0.98), lags=(0, 7), mus=(1 / 50, 1 / 100))


@pytest.fixture
def three_region_history():
    """Three regions over one 15-week season starting on a Sunday."""
    n = 15 * 7
    return {
        f"r{i}": make_series(f"r{i}", epidemic(n, peak=50 + 5 * i, height=30.0 + 10 * i),
                             population=1_000_000 * (i + 1))
        for i in range(3)
    }


@pytest.fixture
def one_season():
    return Season("s", SUNDAY, SUNDAY + dt.timedelta(days=15 * 7 - 1))


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
