import pytest


@pytest.fixture
def default_params():
    from collapse_kaon.core import PhysicalParams
    return PhysicalParams()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
