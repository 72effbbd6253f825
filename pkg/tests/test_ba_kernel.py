import numpy as np
import pytest

from kext.ba_kernel import (KernelConfig, analytic_constant, ba_denominator, ba_density, calibrate,
                            check_pseudodistance, dbar_htilde_det, hefer_h, kernel_estimates, kernel_sample,
                            reproduce, sample_pairs)
from kext.domain import DomainDescriptor

UNIT = DomainDescriptor.ball((0, 0), 1.0)


def test_h_and_denominator_examples():
    zeta = np.array([0.5, 0])
    np.testing.assert_allclose(hefer_h(UNIT, zeta), [-0.5, 0], atol=1e-15)
    assert ba_denominator(UNIT, zeta, np.zeros(2)) == pytest.approx(4 / 3, rel=1e-14)
    assert ba_denominator(UNIT, zeta, zeta) == pytest.approx(1.0, rel=1e-14)
    s = kernel_sample(UNIT, zeta, zeta, KernelConfig())
    assert s.denominator == pytest.approx(1.0)


def test_det_matches_finite_differences(rng):
    d = DomainDescriptor.ellipsoid((0.1, -0.2j), (1.0, 0.7))
    htilde = lambda z: hefer_h(d, z) / d.rho(z)
    for _ in range(5):
        zeta = 0.3 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        h = 1e-6
        J = np.empty((2, 2), dtype=complex)
        for k in range(2):
            e = np.zeros(2, dtype=complex)
            e[k] = h
            dx = (htilde(zeta + e) - htilde(zeta - e)) / (2 * h)
            dy = (htilde(zeta + 1j * e) - htilde(zeta - 1j * e)) / (2 * h)
            J[:, k] = 0.5 * (dx + 1j * dy)
        ref = dbar_htilde_det(d, zeta)
        assert abs(np.linalg.det(J) - ref) <= 1e-8 * max(1.0, abs(ref))


def test_unitary_invariance(rng):
    cfg = KernelConfig(N=3)
    Q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    zeta = np.array([0.3 + 0.2j, -0.4j])
    z = np.array([0.1, 0.5 - 0.1j])
    a = ba_density(UNIT, zeta, z, cfg)
    b = ba_density(UNIT, Q @ zeta, Q @ z, cfg)
    assert abs(a - b) <= 1e-12 * abs(a)


@pytest.mark.parametrize("N", [2, 4])
def test_boundary_decay_slope(N):
    z = np.array([0.2, 0.1])
    r = np.logspace(-8, -4, 9)
    zeta = np.column_stack([np.sqrt(1 - r), np.zeros_like(r)])
    dens = np.abs(ba_density(UNIT, zeta, z, KernelConfig(N)))
    slope = np.polyfit(np.log(r), np.log(dens), 1)[0]
    assert slope == pytest.approx(N - 1, abs=1e-3)


def test_calibration_matches_analytic_constant():
    d = DomainDescriptor.ellipsoid((0.2, 0), (1.0, 0.5))
    cfg = calibrate(d, 4, points=2**18)
    # the density already carries the ellipsoid Jacobian, so the constant is domain independent
    exact = analytic_constant(2, 4)
    assert abs(cfg.C_cal - exact) <= 2e-3 * exact


def test_reproduces_holomorphic_polynomial():
    cfg = KernelConfig(4, analytic_constant(2, 4))
    z = np.array([0.8, 0.1])
    est = reproduce(UNIT, lambda zeta: zeta[:, 0] * zeta[:, 1], z, cfg, points=2**18)
    assert abs(est.value - 0.08) <= max(1e-3, 6 * est.stderr)
    assert est.points >= 2**18


def test_sampled_pairs_lie_on_shell():
    zeta, z, e = sample_pairs(UNIT, 200, seed=0)
    dist = check_pseudodistance(UNIT, zeta, z)
    assert np.all(dist <= e * (1 + 1e-9))
    assert np.all(dist >= e / 2 * (1 - 1e-9))
    assert np.all(UNIT.rho(z) < 0)


def test_kernel_estimates_small():
    rep = kernel_estimates(UNIT, count=500, seed=0)
    assert rep.samples == 500
    assert rep.lower_ratio > 0.1
    assert rep.h1_max <= 1.0 + 1e-12
    assert np.isfinite(rep.h2_ratio)
