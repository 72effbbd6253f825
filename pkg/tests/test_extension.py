import numpy as np
import pytest

from kext.covering import CoveringParams, Region, generate_covering
from kext.divdiff import ambient_trace, constant_trace, cusp_ratio_trace
from kext.domain import DomainDescriptor, frame_arrays
from kext.errors import OutsideCoveredShell, StepUnderflow
from kext.extension import (_profile, build_extension, bump_weight, check_derivative_bounds, dbar_derivatives,
                            local_interpolant, stencil_covered_probes, variety_probes)
from kext.variety import cusp, on_variety

F = cusp(3)
G = ambient_trace(lambda z: np.exp(z[..., 0]) + z[..., 1] ** 2, "exp(z1)+z2^2")


@pytest.fixture(scope="module")
def setup():
    d = DomainDescriptor.ball((1, 0), 1.0)
    p = CoveringParams(kappa=0.1, c=1.0, eps0=0.1, max_layers=3, region=Region((0, 0), 0.1), anchor=(0, 0))
    atlas = generate_covering(d, p)
    return d, atlas, build_extension(G, F, d, atlas), variety_probes(F, atlas, 60, seed=1)


def test_profile_shape():
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    p = _profile(t)
    assert p[0] == p[1] == p[2] == 1.0
    assert p[4] == p[5] == 0.0
    assert 0 < p[3] < 1
    s = np.linspace(0, 3, 301)
    assert np.all(np.diff(_profile(s)) <= 0)


def test_bump_weight_plateau_and_support(ball):
    c = ball.scale_to_level(np.array([0.0, 0.0]), -0.05)
    eta, tan = frame_arrays(ball, c)
    eps = 0.005
    assert bump_weight(c, eps, eta, tan[0], c) == 1.0
    assert bump_weight(c, eps, eta, tan[0], c + 0.9 * eps * eta + 0.9 * np.sqrt(eps) * tan[0]) == 1.0
    assert bump_weight(c, eps, eta, tan[0], c + 2.1 * eps * eta) == 0.0
    assert bump_weight(c, eps, eta, tan[0], c + 1.5 * np.sqrt(eps) * tan[0]) == 0.0


def test_probes_on_variety(setup):
    d, atlas, ext, z = setup
    assert np.all(on_variety(F, z))
    assert np.all(d.rho(z) < 0)


def test_reproduces_trace_on_variety(setup):
    d, atlas, ext, z = setup
    assert np.max(np.abs(ext(z) - G(z))) <= 1e-10


def test_partition_of_unity(setup):
    d, atlas, ext, z = setup
    ii, jj, chi = ext.weights(z)
    assert np.max(np.abs(np.bincount(ii, weights=chi) - 1)) <= 1e-12
    assert np.all(chi >= 0)


def test_constant_reproduced_off_variety(setup):
    d, atlas, _, _ = setup
    ext1 = build_extension(constant_trace(1.0), F, d, atlas)
    z = stencil_covered_probes(ext1, 40, seed=3)
    assert np.max(np.abs(ext1(z) - 1)) <= 1e-12


def test_linear_in_trace(setup):
    d, atlas, ext, z = setup
    h = cusp_ratio_trace(1.0)
    c = atlas.centers[5]
    a = local_interpolant(G, F, d, c, 0.1)
    b = local_interpolant(h, F, d, c, 0.1)
    s = local_interpolant(G.scaled(2.0), F, d, c, 0.1)
    probe = c + 0.3 * a.eps * a.eta + 0.2 * np.sqrt(a.eps) * a.tangent
    assert abs(s(probe) - 2 * a(probe)) <= 1e-12 * abs(a(probe))
    assert not a.empty and not b.empty


def test_local_interpolants_are_holomorphic(setup):
    d, atlas, ext, _ = setup
    ip = next(ip for ip in ext.interpolants if not ip.empty)
    z = ip.center + 0.2 * ip.eps * ip.eta
    for order in [(1, 0), (0, 1)]:
        # d/d(conj) of a holomorphic function: only finite-difference noise remains
        assert abs(dbar_derivatives(ip, d, z, 0.1, order)[0]) <= 1e-6


def test_outside_support_raises(setup):
    d, atlas, ext, _ = setup
    with pytest.raises(OutsideCoveredShell):
        ext(np.array([1.0, 0.0]))


def test_step_underflow(setup):
    d, atlas, ext, z = setup
    with pytest.raises(StepUnderflow):
        dbar_derivatives(ext, d, z[:1], 0.1, (1, 0), min_step=1.0)


def test_derivative_report_structure(setup):
    d, atlas, ext, _ = setup
    z = stencil_covered_probes(ext, 10, seed=0)
    rep = check_derivative_bounds(ext, d, z, max_order=1, refine=0)
    assert set(rep.sup) == {(1, 0), (0, 1)}
    assert all(np.isfinite(v) for v in rep.sup.values())
    assert rep.to_dict()["probes"] == 10
    with pytest.raises(ValueError):
        check_derivative_bounds(ext, d, z, max_order=3)
