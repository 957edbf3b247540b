import pytest

from worksharing.costmodel import collect_stats
from worksharing.workloads import RUNNING_SCHEMAS, RUNNING_SQL, plan_queries, running_tables


@pytest.fixture(scope="session")
def running_catalog():
    return dict(RUNNING_SCHEMAS)


@pytest.fixture(scope="session")
def running_plans(running_catalog):
    return plan_queries(RUNNING_SQL, running_catalog)


@pytest.fixture(scope="session")
def running_data():
    return running_tables(employees=400, seed=3)


@pytest.fixture(scope="session")
def running_stats(running_data):
    return {n: collect_stats(r) for n, r in running_data.items()}


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(RESULTS):
        terminalreporter.write_line(line)
