from __future__ import annotations

import pytest

from cnlp.corpus import fixture_path
from cnlp.typesys import load_background


def read_fixture(name: str) -> str:
    return fixture_path(name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def background():
    return load_background(fixture_path("apis.json"), fixture_path("globals.json"))


@pytest.fixture(scope="session")
def background_jp():
    return load_background(fixture_path("apis.json"), fixture_path("globals_task007.json"))


@pytest.fixture(scope="session")
def buggy_source() -> str:
    return read_fixture("fitness_buggy.cnlp")


@pytest.fixture(scope="session")
def clean_source() -> str:
    return read_fixture("fitness_clean.cnlp")


@pytest.fixture(scope="session")
def coach_source() -> str:
    return read_fixture("fitness_coach.cnlp")


@pytest.fixture(scope="session")
def task007_source() -> str:
    return read_fixture("task007.cnlp")


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; ``check(ok, detail)`` also asserts."""

    def check(ok: bool, detail: str) -> None:
        name = request.node.name
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
