import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kext.divdiff import ambient_trace, divided_difference, divdiff_batch
from kext.domain import DomainDescriptor, delta, koranyi_coordinates, koranyi_frame, from_koranyi, tau
from kext.extension import _profile
from kext.variety import roots_univariate

BALL = DomainDescriptor.ball((1, 0), 1.0)
ORIGIN = np.zeros(2, dtype=complex)
E1 = np.array([1, 0], dtype=complex)

small = st.floats(-0.5, 0.5, allow_nan=False)
cplx = st.builds(complex, small, small)
unit = st.floats(-1, 1, allow_nan=False)


def distinct(nodes, gap=1e-2):
    a = np.array(nodes)
    g = np.abs(a[:, None] - a[None, :]) + np.eye(len(a))
    return g.min() > gap


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=2, max_size=5), st.randoms(use_true_random=False))
def test_divdiff_symmetric(nodes, rnd):
    assume(distinct(nodes))
    g = ambient_trace(lambda z: np.exp(z[..., 0]))
    perm = list(nodes)
    rnd.shuffle(perm)
    a = divided_difference(g, ORIGIN, E1, nodes)
    b = divided_difference(g, ORIGIN, E1, perm)
    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=3, max_size=6), st.lists(cplx, min_size=1, max_size=6))
def test_divdiff_kills_low_degree(nodes, coeffs):
    assume(distinct(nodes, 5e-2))
    coeffs = coeffs[: len(nodes) - 1]
    vals = np.polynomial.polynomial.polyval(np.array(nodes), coeffs)
    scale = max(1.0, float(np.max(np.abs(vals))))
    assert abs(divdiff_batch(vals, nodes)) <= 1e-6 * scale


@settings(max_examples=60, deadline=None)
@given(st.builds(complex, st.floats(0.01, 0.2), st.floats(-0.1, 0.1)), st.builds(complex, unit, unit))
def test_delta_vanishes_on_diagonal_and_round_trips(z1, z2):
    z = np.array([z1, 0.3 * z2])
    assume(BALL.rho(z) < 0)
    assert delta(BALL, z, z) == 0
    fr = koranyi_frame(BALL, z)
    w = np.array([0.01 + 0.02j, -0.03j])
    np.testing.assert_allclose(koranyi_coordinates(fr, from_koranyi(fr, w)), w, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.3), st.builds(complex, unit, unit), st.builds(complex, unit, unit),
       st.floats(1e-4, 1e-1), st.floats(1.01, 10))
def test_tau_monotone(x, v1, v2, eps, factor):
    v = np.array([v1, v2])
    assume(np.linalg.norm(v) > 0.1)
    v = v / np.linalg.norm(v)
    z = np.array([x, 0])
    assert tau(BALL, z, v, eps) < tau(BALL, z, v, factor * eps)


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=2, max_size=7))
def test_roots_residual(coeffs):
    c = np.array(coeffs + [1.0])
    r = roots_univariate(c)
    assert len(r) == len(c) - 1
    assert np.max(np.abs(np.polynomial.polynomial.polyval(r, c))) <= 1e-8 * np.sum(np.abs(c)) * max(1, np.max(np.abs(r))) ** len(c)


@given(st.floats(-5, 5, allow_nan=False))
def test_profile_range(t):
    p = float(_profile(t))
    assert 0.0 <= p <= 1.0
