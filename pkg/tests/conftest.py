import numpy as np
import pytest


def mc_mean(values):
    """Sample mean and its standard error."""
    values = np.asarray(values, dtype=float)
    return values.mean(), values.std(ddof=1) / np.sqrt(values.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


# closed-form and oracle checks first, experiment-level tests last
_ORDER = ("test_specfun", "test_family", "test_second_order", "test_oracles", "test_nn", "test_train",
          "test_datagen", "test_reference", "test_evaluation", "test_plots", "test_trace", "test_cli",
          "test_acceptance")


def pytest_collection_modifyitems(items):
    def rank(item):
        stem = item.path.stem
        return _ORDER.index(stem) if stem in _ORDER else len(_ORDER) - 1
    items.sort(key=rank)
