import numpy as np
import pytest
from hypothesis import settings

from nonprob.data import CovariateSchema, Dataset, PopulationCells, build_cell_index

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def schema2x3():
    return CovariateSchema([("gender", ["m", "f"]), ("employment", ["employed", "unemployed", "inactive"])])


@pytest.fixture
def schema2x2():
    return CovariateSchema([("g", ["m", "f"]), ("a", ["a", "b"])])


def make_dataset(schema, rng, n, target="binary", p=None):
    index = build_cell_index(schema)
    cid = rng.choice(len(index), size=n, p=p)
    y = None
    if target == "binary":
        y = (rng.random(n) < 0.5).astype(float)
    elif target == "real":
        y = rng.standard_normal(n)
    return Dataset(schema, index.codes[cid], y)


def random_cells(schema, rng, low=1, high=500):
    index = build_cell_index(schema)
    return PopulationCells(index, rng.integers(low, high, size=len(index)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k.rstrip("ab"))):
            terminalreporter.write_line(ACCEPTANCE[key])
