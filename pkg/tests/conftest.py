import numpy as np
import pytest

from infoperc import graphs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_GRAPHS = {
    "path2": lambda: graphs.path(2),
    "path3": lambda: graphs.path(3),
    "cycle4": lambda: graphs.cycle(4),
    "star4": lambda: graphs.Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)]),
    "k4": lambda: graphs.Graph.from_edges(4, [(a, b) for a in range(4) for b in range(a + 1, 4)]),
}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
