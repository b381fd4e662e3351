import numpy as np
import pytest

from fedscore.data import Categorical, Continuous, Schema, SiteDataset, VariableSpec


def make_dataset(columns: dict, y, site_id=1, split=None, categories=None):
    """Build a SiteDataset; string columns become categorical."""
    categories = categories or {}
    specs = []
    cols = {}
    for name, values in columns.items():
        arr = np.asarray(values)
        if arr.dtype.kind in "US":
            cats = categories.get(name) or tuple(sorted(set(arr.tolist())))
            specs.append(VariableSpec(name, "categorical", tuple(cats)))
            cols[name] = arr.astype(str)
        else:
            specs.append(VariableSpec(name, "continuous"))
            cols[name] = arr.astype(np.float64)
    return SiteDataset(site_id, Schema(tuple(specs), "y"), cols, np.asarray(y), split=split)


SMALL_PLAN = (
    Continuous("x1", 0.0, 1.0),
    Continuous("x2", 0.0, 1.0),
    Categorical("g", ("a", "b", "c"), (0.3, 0.4, 0.3)),
)
SMALL_BETA = (-0.5, 1.0, -0.7, 0.4, 0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
