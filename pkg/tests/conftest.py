import numpy as np
import pytest

from kext.domain import DomainDescriptor


@pytest.fixture
def ball():
    return DomainDescriptor.ball((1, 0), 1.0)


@pytest.fixture
def ball3():
    return DomainDescriptor.ball((0, 0, 0), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def collar_points(d, m, rng, depth=(1e-3, 0.3)):
    u = rng.standard_normal((m, d.n)) + 1j * rng.standard_normal((m, d.n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lev = -np.exp(rng.uniform(np.log(depth[0]), np.log(depth[1]), m)) * d.const
    return d.level_point(u, lev)


def unit_vectors(n, m, rng):
    v = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


ACCEPTANCE = {}


def record(number: int, title: str, passed: bool, detail: str):
    line = f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
