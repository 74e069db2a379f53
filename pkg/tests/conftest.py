import os

import pytest

from galatt.gamefile import read_game_file
from galatt.smt import SmtBackend

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GAMES = os.path.join(ROOT, "games")


def game_path(name: str) -> str:
    return os.path.join(GAMES, name)


@pytest.fixture(scope="session")
def backend():
    be = SmtBackend()
    yield be
    be.close()


@pytest.fixture(scope="session")
def g_r():
    return read_game_file(game_path("g_r.game"))


@pytest.fixture(scope="session")
def g_b():
    return read_game_file(game_path("g_b.game"))


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
