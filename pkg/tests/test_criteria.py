import numpy as np
import pytest

from kext.covering import CoveringParams, Region, generate_covering
from kext.criteria import (LayerSumSeries, SamplerConfig, estimate_c_eps_interior, estimate_c_inf,
                           estimate_c_inf_kappa_eps, estimate_c_q, fit_layer_exponent, fit_power)
from kext.divdiff import ambient_trace, constant_trace, cusp_ratio_trace, planes_trace
from kext.errors import InsufficientTail
from kext.variety import cusp, planes

SMALL = SamplerConfig(layers=3, rho_top=0.02, points_per_layer=6, max_order=2)
ALPHAS = [0.0, 1.0]


def test_constant_trace_gives_one(ball):
    rep = estimate_c_inf(constant_trace(1.0), planes(ALPHAS), ball, SMALL)
    assert rep.value == pytest.approx(1.0, abs=1e-12)
    assert rep.per_order.get(2, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_zero_trace_gives_zero(ball):
    rep = estimate_c_inf(constant_trace(0.0), planes(ALPHAS), ball, SMALL)
    assert rep.value == 0.0
    assert rep.relative_change == 0.0


def test_scaling(ball):
    g = planes_trace(ALPHAS, "power", 0.25)
    a = estimate_c_inf(g, planes(ALPHAS), ball, SMALL).value
    b = estimate_c_inf(g.scaled(-3 + 4j), planes(ALPHAS), ball, SMALL).value
    assert b == pytest.approx(5 * a, rel=1e-12)


def test_kappa_eps_bounded_by_c_inf(ball):
    g = planes_trace(ALPHAS, "power", 0.25)
    full = estimate_c_inf(g, planes(ALPHAS), ball, SMALL, kappa=0.05)
    sub = estimate_c_inf_kappa_eps(g, planes(ALPHAS), ball, 0.05, 0.02, SMALL)
    assert sub.value <= full.value * (1 + 1e-12)


def test_witness_and_doubling(ball):
    g = planes_trace(ALPHAS, "power", 0.25)
    rep = estimate_c_inf(g, planes(ALPHAS), ball, SMALL)
    assert rep.witness is not None and rep.samples > 0
    assert rep.stability <= rep.value
    assert SMALL.doubled().points_per_layer == 12
    assert rep.to_dict()["value"] == rep.value


def test_interior_criterion_is_finite(ball):
    g = ambient_trace(lambda z: z[..., 0] ** 2 + z[..., 1])
    rep = estimate_c_eps_interior(g, planes(ALPHAS), ball, 0.05, SMALL)
    assert np.isfinite(rep.value)


def test_fit_power_synthetic():
    r = np.logspace(-4, -1, 8)
    assert fit_power(r, 3 * r**2) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(InsufficientTail):
        fit_power([0.1], [1.0])


def test_fit_layer_exponent_synthetic():
    kt = 0.8
    sums = [5.0, 4.0] + [kt ** (1.5 * k) for k in range(2, 10)]
    s = LayerSumSeries(2.0, kt, list(range(10)), sums, [])
    assert fit_layer_exponent(s) == pytest.approx(1.5, abs=1e-12)
    with pytest.raises(InsufficientTail):
        fit_layer_exponent(LayerSumSeries(2.0, kt, [0, 1, 2], [1.0, 1.0, 1.0], []))


def test_c_q_scaling_and_layers(ball):
    p = CoveringParams(kappa=0.2, c=1.0, eps0=0.1, max_layers=4, region=Region((0, 0), 0.1), anchor=(0, 0))
    atlas = generate_covering(ball, p)
    g = cusp_ratio_trace(1.0)
    a = estimate_c_q(g, cusp(3), ball, atlas, 2.0)
    b = estimate_c_q(g.scaled(2.0), cusp(3), ball, atlas, 2.0)
    assert len(a.sums) == len(atlas.layers)
    assert a.total > 0
    assert b.total == pytest.approx(4 * a.total, rel=1e-10)
    with pytest.raises(ValueError):
        estimate_c_q(g, cusp(3), ball, atlas, 0.5)
