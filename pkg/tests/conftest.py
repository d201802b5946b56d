import time

import pytest

_CRITERIA: dict[tuple[int, str], str] = {}


class Criterion:
    """Collects the verdict of one acceptance criterion and its runtime budget."""

    def __init__(self, number: int, name: str, budget: float):
        self.number, self.name, self.budget = number, name, budget
        self.checks: list[tuple[str, bool]] = []
        self.start = time.perf_counter()

    def check(self, label: str, ok: bool):
        self.checks.append((label, bool(ok)))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check(f"runtime {elapsed:.1f}s < {self.budget:g}s", elapsed < self.budget)
        ok = all(c[1] for c in self.checks)
        failed = [label for label, good in self.checks if not good]
        detail = "; ".join(label for label, _ in self.checks)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number:2d} {self.name}: {detail}"
        _CRITERIA[(self.number, self.name)] = line
        print(line)
        assert ok, "failed: " + "; ".join(failed)


@pytest.fixture
def criterion():
    def make(number: int, name: str, budget: float) -> Criterion:
        return Criterion(number, name, budget)

    return make


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
