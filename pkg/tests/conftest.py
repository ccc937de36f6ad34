import warnings

import pytest

from finslerlab.errors import PrecisionWarning

# (criterion number, status, detail) lines recorded by test_acceptance
ACCEPTANCE = []


def pytest_configure(config):
    warnings.simplefilter("default", PrecisionWarning)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
