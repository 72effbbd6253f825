import itertools

import numpy as np
import pytest

from kext.divdiff import (ambient_trace, constant_trace, contour_divdiff_oracle, cusp_ratio_trace,
                          divided_difference, divdiff_batch, newton_eval, newton_table, planes_trace)
from kext.errors import CoincidentNodes, OffVarietyNode, RadiusTooSmall
from kext.pipelines import dm3_identity_error
from kext.variety import cusp, planes

ORIGIN = np.zeros(2, dtype=complex)
E1 = np.array([1, 0], dtype=complex)


def monomial(k):
    return ambient_trace(lambda z: z[..., 0] ** k, f"z1^{k}")


def test_polynomial_examples():
    # the top difference of lam^k over k+1 nodes is 1, and of lower degrees is 0
    nodes = np.array([0.1, -0.2j, 0.3 + 0.1j, -0.4])
    assert divided_difference(monomial(3), ORIGIN, E1, nodes) == pytest.approx(1.0, abs=1e-12)
    assert divided_difference(monomial(2), ORIGIN, E1, nodes) == pytest.approx(0.0, abs=1e-12)
    assert divided_difference(constant_trace(5.0), ORIGIN, E1, nodes[:2]) == 0


def test_two_point_example():
    g = ambient_trace(lambda z: np.exp(z[..., 0]))
    dd = divided_difference(g, ORIGIN, E1, [0.0, 1.0])
    assert dd == pytest.approx(np.e - 1, rel=1e-14)


def test_permutation_invariance(rng):
    g = ambient_trace(lambda z: np.exp(z[..., 0]) / (2 - z[..., 0]))
    nodes = rng.standard_normal(5) * 0.3 + 1j * rng.standard_normal(5) * 0.3
    ref = divided_difference(g, ORIGIN, E1, nodes)
    for perm in itertools.islice(itertools.permutations(nodes), 0, 120, 7):
        assert abs(divided_difference(g, ORIGIN, E1, perm) - ref) <= 1e-10 * abs(ref)


def test_recursion_matches_contour(rng):
    G = lambda z: np.exp(z[..., 0]) * np.cos(z[..., 1])
    g = ambient_trace(G)
    for _ in range(30):
        k = int(rng.integers(2, 6))
        z = 0.2 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        v /= np.linalg.norm(v)
        nodes = 0.3 * (rng.uniform(-1, 1, k) + 1j * rng.uniform(-1, 1, k))
        a = divided_difference(g, z, v, nodes)
        b = contour_divdiff_oracle(G, z, v, nodes, radius=1.0)
        assert abs(a - b) <= 1e-8 * max(1.0, abs(b))


def test_table_and_newton_form(rng):
    g = ambient_trace(lambda z: np.sin(z[..., 0]))
    nodes = np.array([0.0, 0.2, 0.5j, -0.3])
    t = newton_table(g, ORIGIN, E1, nodes)
    x = np.linspace(-0.3, 0.3, 7) + 0.1j
    p = newton_eval(t.newton_coefficients(), nodes, x)
    # cubic interpolant of sin on these nodes is close and exact at the nodes
    np.testing.assert_allclose(newton_eval(t.newton_coefficients(), nodes, nodes), np.sin(nodes), atol=1e-14)
    assert np.max(np.abs(p - np.sin(x))) < 1e-3
    assert t.condition >= 1.0


def test_batch_matches_scalar(rng):
    nodes = rng.standard_normal((10, 4)) + 1j * rng.standard_normal((10, 4))
    vals = np.exp(nodes)
    got = divdiff_batch(vals, nodes)
    g = ambient_trace(lambda z: np.exp(z[..., 0]))
    for i in range(10):
        assert abs(got[i] - divided_difference(g, ORIGIN, E1, nodes[i])) <= 1e-10 * max(1, abs(got[i]))


def test_linearity(rng):
    g1 = ambient_trace(lambda z: np.exp(z[..., 0]))
    g2 = ambient_trace(lambda z: z[..., 0] ** 5)
    s = ambient_trace(lambda z: 2 * np.exp(z[..., 0]) - 3j * z[..., 0] ** 5)
    nodes = [0.1, 0.4j, -0.2, 0.3 + 0.3j]
    lhs = divided_difference(s, ORIGIN, E1, nodes)
    rhs = 2 * divided_difference(g1, ORIGIN, E1, nodes) - 3j * divided_difference(g2, ORIGIN, E1, nodes)
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_errors():
    g = monomial(2)
    with pytest.raises(CoincidentNodes):
        divided_difference(g, ORIGIN, E1, [0.1, 0.1])
    with pytest.raises(RadiusTooSmall):
        contour_divdiff_oracle(g.fn, ORIGIN, E1, [0.5, -0.5], radius=0.5)
    with pytest.raises(OffVarietyNode):
        divided_difference(g, np.array([0.04, 0]), np.array([0, 1]), [0.1, -0.1], f=cusp(3))


def test_cusp_two_point_value():
    # on the vertical line through (x, 0) the sheets are lam = +-x^(3/2); z2/z1 gives 1/x
    x = 0.04
    z = np.array([x, 0], dtype=complex)
    v = np.array([0, 1], dtype=complex)
    lam = [x**1.5, -(x**1.5)]
    dd = divided_difference(cusp_ratio_trace(1.0), z, v, lam, f=cusp(3))
    assert dd == pytest.approx(1 / x, rel=1e-12)


def test_planes_power_trace_on_sheets():
    alphas = [0.0, 1.0]
    g = planes_trace(alphas, "power", 0.5)
    z = np.array([[0.3, 0.0], [0.3, 0.3]], dtype=complex)
    np.testing.assert_allclose(g(z), [0.3**0.5, 0.6**0.5], rtol=1e-14)
    nodes = np.array([0.0, 0.3])
    assert np.isfinite(divided_difference(g, np.array([0.3, 0]), np.array([0, 1]), nodes, f=planes(alphas)))


@pytest.mark.parametrize("q", [10, 12])
def test_dm3_identity(q):
    assert dm3_identity_error(q, count=50, seed=0) <= 1e-10
