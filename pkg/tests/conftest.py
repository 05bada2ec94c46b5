import time

import pytest

from mwpool.churn import fixed_pool, simulate
from mwpool.master import MasterConfig
from mwpool.radtrans import run_photoionization

from helpers import stromgren_setup


@pytest.fixture(scope="session")
def stromgren32():
    """The n=32, R_s=8 run, shared because it takes several seconds."""
    grid, params = stromgren_setup(32, 8.0)
    t0 = time.process_time()
    final, report, app = run_photoionization(
        grid, params, lambda hooks: simulate(MasterConfig(), hooks, fixed_pool(1)))
    return final, report, app, time.process_time() - t0


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
