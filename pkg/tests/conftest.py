from collections import OrderedDict
import gc
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iga_pmg.discretization import benchmark, laplace_variant  # noqa: E402
from iga_pmg.pmg import build_hierarchy  # noqa: E402

# bounded: a hierarchy at h = 2^-7 and p = 5 holds a few hundred MB
_CACHE_SIZE = 8
_cache = OrderedDict()


def _hierarchy(bid, p, h_exp, smoother, laplace=False, cycle="V"):
    key = (bid, p, h_exp, smoother, laplace, cycle)
    if key in _cache:
        _cache.move_to_end(key)
        return _cache[key]
    # a sibling with the same operators only needs new smoothers
    sibling = next((h for k, h in _cache.items() if k[:3] == key[:3] and k[4] == laplace), None)
    spec = benchmark(bid)
    if laplace:
        spec = laplace_variant(spec)
    hier = build_hierarchy(spec, p, 2.0**-h_exp, smoother=smoother, cycle=cycle, operators=sibling)
    _cache[key] = hier
    while len(_cache) > _CACHE_SIZE:
        _cache.popitem(last=False)
    return hier


def clear_hierarchies():
    _cache.clear()
    gc.collect()


@pytest.fixture(scope="session")
def hierarchy():
    """Cached hierarchy factory ``hierarchy(bid, p, h_exp, smoother, laplace=False)``."""
    return _hierarchy


@pytest.fixture
def free_memory():
    """Drop cached hierarchies before a test that needs several GB."""
    clear_hierarchies()
    yield
    gc.collect()


# acceptance verdicts, printed after the run regardless of output capturing
VERDICTS = OrderedDict()


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS.values():
        terminalreporter.write_line(line)
