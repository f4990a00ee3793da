from pathlib import Path

import pytest

from reserve_game import formats

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fixture_path():
    return lambda name: FIXTURES / name


@pytest.fixture
def fleet13():
    return formats.read_fleet(FIXTURES / "fleet_13node.json")


@pytest.fixture
def plr13():
    return formats.read_table(FIXTURES / "plr_13node.json")


@pytest.fixture
def fleet34():
    return formats.read_fleet(FIXTURES / "fleet_34node.json")


@pytest.fixture
def plr34():
    return formats.read_table(FIXTURES / "plr_34node.json")


@pytest.fixture
def fleet123():
    return formats.read_fleet(FIXTURES / "fleet_123node.json")


@pytest.fixture
def network4():
    return formats.read_network(FIXTURES / "network_4bus.json")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
