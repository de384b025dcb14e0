import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

TRIANGLE = np.array([[0.0, 1.0], [math.cos(math.pi / 6), -0.5], [-math.cos(math.pi / 6), -0.5]])


def random_spd(rng, d, lo=0.3, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * rng.uniform(lo, hi, d)) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request, capsys):
    """Record one ``PASS``/``FAIL`` line for an acceptance criterion and print it."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._acceptance_lines.append((number, line))
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
