import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmj.ranking import DisplaySet, Ranking

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

Q_GRID = (0.1, 0.5, 0.9)


def all_displays(n, min_size=2):
    return [DisplaySet(c) for m in range(min_size, n + 1) for c in itertools.combinations(range(n), m)]


def random_ranking(n, rng):
    return Ranking(tuple(int(x) for x in rng.permutation(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda s: int(s.split("-")[1])):
        terminalreporter.write_line(results[name])
