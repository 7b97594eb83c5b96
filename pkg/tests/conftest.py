import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class CriterionReport:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = "; ".join(f"{label} [{'ok' if ok else 'FAILED'}]" for label, ok in self.checks)
        return f"criterion {self.number:>2} {status}: {self.title} | {detail}"

    def finish(self) -> None:
        line = self.line()
        _CRITERIA.append(line)
        print(line)
        failed = [label for label, ok in self.checks if not ok]
        assert not failed, f"criterion {self.number} failed: {failed}"


@pytest.fixture
def criterion():
    return CriterionReport


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
