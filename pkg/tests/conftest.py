"""Shared fixtures; collects one pass/fail line per acceptance criterion."""

from __future__ import annotations

from dataclasses import dataclass

import pytest


@dataclass
class Verdict:
    key: str
    title: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.key}: {self.title} | {self.detail}"


_VERDICTS: list[Verdict] = []


class Recorder:
    def __init__(self, key: str, title: str):
        self.key = key
        self.title = title

    def check(self, passed: bool, detail: str) -> None:
        """Record the outcome, print it, then fail the test if needed."""
        v = Verdict(self.key, self.title, bool(passed), detail)
        _VERDICTS.append(v)
        print(v.line())
        assert passed, v.line()


@pytest.fixture
def criterion():
    return Recorder


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for v in sorted(_VERDICTS, key=lambda v: v.key):
        terminalreporter.write_line(v.line())
