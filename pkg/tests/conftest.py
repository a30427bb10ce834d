import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evoap.dataseries import DatasetSeries

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_series(features, active=None, labels=None, ids=None) -> DatasetSeries:
    features = np.asarray(features, dtype=float)
    T, N, _ = features.shape
    active = np.ones((T, N), bool) if active is None else np.asarray(active, bool)
    features = np.where(active[..., None], features, np.nan)
    ids = ids or [f"p{i}" for i in range(N)]
    return DatasetSeries(ids, features, active, labels=labels)


@pytest.fixture
def series():
    return make_series


# acceptance criteria summary ------------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _CRITERIA.get(n, (title, True))
    _CRITERIA[n] = (title, prev[1] and ok and not rep.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
