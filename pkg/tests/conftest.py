import pytest

from retrospect.envs import make_env


@pytest.fixture(scope="session")
def qa():
    return make_env("synthqa", seed=0)


@pytest.fixture(scope="session")
def house():
    return make_env("synthhouse", seed=0)


@pytest.fixture(scope="session")
def shop():
    return make_env("synthshop", seed=0)


@pytest.fixture(scope="session", params=["synthqa", "synthhouse", "synthshop"])
def any_env(request):
    return make_env(request.param, seed=0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
