from functools import lru_cache

import pytest

from leelab.fixtures import reference_config
from leelab.validation import context_from_config

_LINES = pytest.StashKey[list]()


@lru_cache(maxsize=None)
def reference_context(manifold: str, n: int, lam: float | None = None):
    """Shared ValidationContext per reference fixture, so expensive solves happen once per session."""
    overrides = {} if lam is None else {"params__lambda": lam}
    return context_from_config(reference_config(manifold, n, **overrides))


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_log(request):
    lines = request.config.stash[_LINES]

    def log(criterion: int, title: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(line)
        lines.append(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
