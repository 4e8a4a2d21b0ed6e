import numpy as np
import pytest
from hypothesis import settings

from tsclean.frame import SeriesFrame
from tsclean.synthetic import make_load_series

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def load_series():
    """Eight weeks of half-hourly synthetic load with its generating parts."""
    return make_load_series(n=48 * 7 * 8, seed=5)


@pytest.fixture
def load_frame(load_series):
    y, _ = load_series
    return SeriesFrame.from_array(y, (48, 336), names=("load",))


def seasonal_series(n, period, amplitude=10.0, level=0.0):
    t = np.arange(n)
    return level + amplitude * np.sin(2 * np.pi * t / period)


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """Record the outcome line of one acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE[number] = (title, ok, detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  [{detail}]")
