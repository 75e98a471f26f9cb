import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


# {{{ acceptance verdicts

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    """``verdict(number, ok, detail)`` records one PASS/FAIL line per criterion.

    A criterion test that errors before recording still gets a FAIL line.
    """
    seen = []

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        print(line)
        _VERDICTS[number] = line
        seen.append(number)
        return ok

    yield record
    if not seen:
        number = int(request.node.name.split("_")[2])
        _VERDICTS[number] = f"FAIL criterion {number:2d}: did not complete"


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])


# }}}
