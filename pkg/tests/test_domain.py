import numpy as np
import pytest

from conftest import collar_points, unit_vectors
from kext.domain import (DomainDescriptor, delta, from_koranyi, koranyi_ball, koranyi_coordinates,
                         koranyi_frame, tau, tau_bisection, tau_closed_form)
from kext.errors import DegenerateGradient, NonPositiveEpsilon, OutsideCollar


def test_rho_examples(ball):
    assert ball.rho(np.array([0, 0])) == pytest.approx(0.0)
    assert ball.rho(np.array([0.1, 0])) == pytest.approx(-0.19)
    ell = DomainDescriptor.ellipsoid((0, 0), (1, 2))
    assert ell.rho(np.array([0, 2])) == pytest.approx(0.0)


def test_frame_examples(ball, ball3):
    fr = koranyi_frame(ball, np.array([0.1, 0]))
    np.testing.assert_allclose(fr.eta, [-1, 0], atol=1e-15)
    np.testing.assert_allclose(fr.tangent[0], [0, 1], atol=1e-15)
    fr3 = koranyi_frame(ball3, np.array([0, 0, 0.7]))
    np.testing.assert_allclose(fr3.eta, [0, 0, 1], atol=1e-15)


def test_frames_unitary(ball, ball3, rng):
    for d in (ball, ball3):
        for z in collar_points(d, 50, rng):
            B = koranyi_frame(d, z).basis
            np.testing.assert_allclose(B @ B.conj().T, np.eye(d.n), atol=1e-14)


def test_koranyi_coordinates_round_trip(ball, rng):
    z0 = np.array([0.5, 0.0])
    fr = koranyi_frame(ball, z0)
    np.testing.assert_allclose(koranyi_coordinates(fr, z0), [0, 0], atol=1e-16)
    np.testing.assert_allclose(koranyi_coordinates(fr, z0 + 0.3 * fr.eta), [0.3, 0], atol=1e-15)
    z = z0 + 0.1 * (rng.standard_normal((20, 2)) + 1j * rng.standard_normal((20, 2)))
    np.testing.assert_allclose(from_koranyi(fr, koranyi_coordinates(fr, z)), z, atol=1e-14)


def test_delta_examples(ball):
    z = np.array([0.5, 0])
    fr = koranyi_frame(ball, z)
    assert delta(ball, z, z) == 0
    assert delta(ball, z, z + 0.01 * fr.eta) == pytest.approx(0.01)
    assert delta(ball, z, z + 0.1 * fr.tangent[0]) == pytest.approx(0.01)


def test_delta_outside_collar(ball):
    with pytest.raises(OutsideCollar):
        delta(ball, np.array([1.0, 0]), np.array([0.5, 0]))


def test_degenerate_gradient(ball):
    with pytest.raises(DegenerateGradient):
        koranyi_frame(ball, np.array([1.0, 0]))


def test_tau_examples(ball):
    z = np.array([0.1, 0])
    assert tau(ball, z, np.array([0, 1]), 0.19) == pytest.approx(np.sqrt(0.19), rel=1e-14)
    assert tau(ball, z, np.array([1, 0]), 0.19) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(NonPositiveEpsilon):
        tau(ball, z, np.array([1, 0]), 0.0)


def test_tau_bisection_matches_closed_form(ball, rng):
    ell = DomainDescriptor.ellipsoid((0.2, 0), (1.0, 0.6))
    for d in (ball, ell):
        z = collar_points(d, 10, rng)
        v = unit_vectors(2, 10, rng)
        eps = rng.uniform(1e-3, 0.2, 10)
        for i in range(10):
            assert tau_bisection(d, z[i], v[i], eps[i]) == pytest.approx(
                float(tau_closed_form(d, z[i], v[i], eps[i])), rel=1e-8)


def test_tau_monotone_in_eps(ball, rng):
    z = collar_points(ball, 1, rng)[0]
    v = unit_vectors(2, 1, rng)[0]
    eps = np.linspace(1e-4, 0.5, 200)
    assert np.all(np.diff(tau(ball, z, v, eps)) > 0)


def test_numeric_domain_uses_bisection(rng):
    d = DomainDescriptor.ball((1, 0), 1.0, numeric=True)
    z, v = np.array([0.1, 0]), np.array([0, 1])
    assert tau(d, z, v, 0.19) == pytest.approx(np.sqrt(0.19), rel=1e-8)


def test_quasi_symmetry(ball, rng):
    z = collar_points(ball, 10_000, rng, depth=(1e-3, 0.1))
    fr_eta = ball.dbar_rho(z)
    fr_eta /= np.linalg.norm(fr_eta, axis=1, keepdims=True)
    eps = np.exp(rng.uniform(np.log(1e-4), np.log(1e-2), len(z)))
    w = (rng.uniform(-1, 1, (len(z), 2)) + 1j * rng.uniform(-1, 1, (len(z), 2))) * 0.5
    t = np.stack([np.conj(fr_eta[:, 1]), -np.conj(fr_eta[:, 0])], axis=1)
    zeta = z + (eps * w[:, 0])[:, None] * fr_eta + (np.sqrt(eps) * w[:, 1])[:, None] * t
    ok = ball.in_collar(zeta)
    r = delta(ball, z[ok], zeta[ok]) / delta(ball, zeta[ok], z[ok])
    assert 1 / 4 <= r.min() and r.max() <= 4


def test_koranyi_ball_contains(ball):
    b = koranyi_ball(ball, np.array([0.5, 0]), 0.04)
    fr = b.frame
    assert b.contains(b.center)
    assert b.contains(b.center + 0.03 * fr.eta)
    assert not b.contains(b.center + 0.05 * fr.eta)
    assert b.contains(b.center + 0.19 * fr.tangent[0])
    assert not b.contains(b.center + 0.21 * fr.tangent[0])


def test_domain_dict_round_trip():
    for d in (DomainDescriptor.ball((1, 0.5j), 2.0), DomainDescriptor.ellipsoid((0, 0), (1, 3))):
        assert DomainDescriptor.from_dict(d.to_dict()) == d
