import numpy as np
import pytest

from plategfem import GfemSpace, LShape, Rectangle

SQUARE = Rectangle(-0.5, 0.5, -0.5, 0.5)
LDOM = LShape(0.5)

_cache = {}


def get_space(domain, level, space="q2", delta=1.0 / 3.0):
    key = (domain, level, space, delta)
    if key not in _cache:
        _cache[key] = GfemSpace.build(domain, level, delta, space)
    return _cache[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_points(domain, n, rng):
    a, b, c, d = domain.bbox
    out = []
    while len(out) < n:
        p = rng.uniform([a, c], [b, d], size=(2 * n, 2))
        out.extend(p[domain.contains(p)])
    return np.array(out[:n])


ACCEPTANCE = []


def record_criterion(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
