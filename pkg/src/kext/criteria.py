"""Sampled estimators of the divided-difference extension criteria.

Suprema are realised as maxima over a nested sample universe, so a larger
budget can only increase a report.  Integral criteria are sums over the balls
of a covering of slice integrals computed by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .covering import CoveringAtlas, Region
from .divdiff import TraceFunction, divdiff_batch
from .domain import DomainDescriptor, as_points, frame_arrays, tau
from .errors import InsufficientTail, TransversalityViolated
from .variety import PolyVariety, lambda_sets


@dataclass(frozen=True)
class SamplerConfig:
    """Sample universe for the supremum criteria.

    Layer j sits on the level set rho = -rho_top * 2**-j.  Its first point is
    the radial projection of the region centre; the others are offset from it
    by up to ``spread`` Koranyi units (3 kappa |rho|^(1/2) tangentially,
    |rho| along i*eta) and pushed back onto the layer.
    """

    seed: int = 0
    layers: int = 6
    rho_top: float = 0.04
    points_per_layer: int = 32
    directions: int = 4
    max_order: int = 3
    region: Region | None = None
    spread: float = 1.0

    def __post_init__(self):
        if self.max_order < 2:
            raise ValueError("max_order must be at least 2")

    def doubled(self) -> "SamplerConfig":
        return replace(self, points_per_layer=2 * self.points_per_layer)

    def levels(self) -> np.ndarray:
        return -self.rho_top * 2.0 ** -np.arange(self.layers)


@dataclass
class CriterionReport:
    value: float
    witness: dict | None
    samples: int
    stability: float
    layer_values: list = field(default_factory=list)  # (|rho| of layer, max term)
    per_order: dict = field(default_factory=dict)
    layer_order_values: dict = field(default_factory=dict)  # order -> max term per layer

    @property
    def relative_change(self) -> float:
        """|full - half budget| / full; ``stability`` holds the half-budget value."""
        return abs(self.value - self.stability) / self.value if self.value else 0.0

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            w = {k: (_pairs(v) if isinstance(v, np.ndarray) else v) for k, v in self.witness.items()}
        return {"value": self.value, "witness": w, "samples": self.samples, "stability": self.stability,
                "layer_values": [list(x) for x in self.layer_values],
                "per_order": {str(k): v for k, v in self.per_order.items()},
                "layer_order_values": {str(k): v for k, v in self.layer_order_values.items()}}


@dataclass
class LayerSumSeries:
    q: float
    kappa_tilde: float
    levels: list
    sums: list
    terms: list  # (ball id, layer, term)
    flagged: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return math.fsum(self.sums)

    def tail_ratios(self, start: int = 2) -> np.ndarray:
        s = np.array(self.sums[start:])
        return s[1:] / s[:-1]

    def to_dict(self) -> dict:
        return {"q": self.q, "kappa_tilde": self.kappa_tilde, "levels": self.levels, "sums": self.sums,
                "total": self.total, "flagged": self.flagged}


def _pairs(a):
    a = np.asarray(a, dtype=complex).ravel()
    return [[float(x.real), float(x.imag)] for x in a]


def default_region(d: DomainDescriptor) -> Region:
    """Boundary point a - e_1 / sqrt(w_1) with a unit window."""
    p = d.a.copy()
    p[0] -= np.sqrt(d.const / d.w[0])
    return Region(tuple(p), 1.0)


# ---------------------------------------------------------------- sample universe


def _layer_points(d: DomainDescriptor, cfg: SamplerConfig, j: int, kappa: float) -> np.ndarray:
    level = float(cfg.levels()[j])
    region = cfg.region or default_region(d)
    anchor = d.scale_to_level(region.point, level)
    eta, tan = frame_arrays(d, anchor)
    pts = [anchor]
    r = abs(level)
    for i in range(1, cfg.points_per_layer):
        rng = np.random.default_rng([cfg.seed, j, i])
        c1 = 1j * cfg.spread * r * rng.uniform(-1, 1)
        t = rng.standard_normal((d.n - 1, 2)) @ np.array([1, 1j])
        t *= cfg.spread * 3 * kappa * np.sqrt(r) * np.sqrt(rng.uniform()) / np.linalg.norm(t)
        z = anchor + c1 * eta + t @ tan
        pts.append(d.scale_to_level(z, level))
    return np.array(pts)


def _directions(d: DomainDescriptor, z, cfg: SamplerConfig, j: int, i: int) -> np.ndarray:
    """Frame tangent first, then near-tangent perturbations and uniform unit vectors."""
    eta, tan = frame_arrays(d, z)
    rng = np.random.default_rng([cfg.seed, j, i, 1])
    out = [tan[0]]
    r = abs(float(d.rho(z)))
    for m in range(cfg.directions):
        xi = rng.standard_normal(d.n) + 1j * rng.standard_normal(d.n)
        v = tan[0] + np.sqrt(r) * xi if m % 2 == 0 else xi
        out.append(v / np.linalg.norm(v))
    return np.array(out)


def _subset_divdiffs(g: TraceFunction, Z, V, lam, usable, max_order):
    """Yield (k, rows, |g[...]|) over all k-subsets of usable roots of each line."""
    order = np.argsort(~usable, axis=1, kind="stable")
    L = np.take_along_axis(lam, order, axis=1)
    u = usable.sum(axis=1)
    umax = int(u.max()) if len(u) else 0
    if umax == 0:
        return
    L = L[:, :umax]
    valid = np.arange(umax) < u[:, None]
    L = np.where(valid, L, 0)
    with np.errstate(all="ignore"):
        vals = g(Z[:, None, :] + L[..., None] * V[:, None, :])
    for k in range(1, min(max_order, umax) + 1):
        for comb in combinations(range(umax), k):
            rows = np.flatnonzero(u > comb[-1])
            if len(rows):
                c = list(comb)
                yield k, rows, np.abs(divdiff_batch(vals[rows][:, c], L[rows][:, c])), L[rows][:, c]


def _sup_over_lines(g, f, d, Z, V, kappa, max_order, tag):
    """Per-line maximum of |g[...]| tau^(k-1), with witnesses and per-order maxima."""
    batch = lambda_sets(f, d, Z, V, kappa)
    t = np.asarray(tau(d, Z, V, np.abs(d.rho(Z))))
    best = np.zeros(len(Z))
    by_order = np.zeros((max_order + 1, len(Z)))
    wit_nodes = [None] * len(Z)
    wit_k = np.zeros(len(Z), dtype=int)
    for k, rows, dd, nodes in _subset_divdiffs(g, Z, V, batch.roots, batch.usable, max_order):
        term = dd * t[rows] ** (k - 1)
        term = np.where(np.isfinite(term), term, np.inf)
        np.maximum.at(by_order[k], rows, term)
        better = term > best[rows]
        for r, nd in zip(rows[better], nodes[better]):
            wit_nodes[r] = nd
        wit_k[rows[better]] = k
        best[rows[better]] = term[better]
    return best, wit_nodes, wit_k, by_order


def _report(best, wit_nodes, wit_k, by_order, Z, V, layer, half, levels):
    if len(best) == 0:
        return CriterionReport(0.0, None, 0, 0.0, [], {})
    per_order = {k: float(by_order[k].max()) for k in range(1, len(by_order))}
    i = int(np.argmax(best))
    witness = None
    if best[i] > 0:
        witness = {"z": Z[i], "v": V[i], "nodes": np.asarray(wit_nodes[i]), "order": int(wit_k[i])}
    layer_values = []
    layer_order = {k: [] for k in per_order}
    if levels is not None:
        for j, lev in enumerate(levels):
            sel = layer == j
            layer_values.append((float(abs(lev)), float(best[sel].max()) if sel.any() else 0.0))
            for k in per_order:
                layer_order[k].append(float(by_order[k][sel].max()) if sel.any() else 0.0)
    stab = float(best[half].max()) if half.any() else 0.0
    return CriterionReport(float(best[i]), witness, len(best), stab, layer_values, per_order, layer_order)


def _universe(d, cfg, kappa, offsets: bool, own: bool):
    """Lines (z, v) of the sample universe with layer index and half-budget mask."""
    Z, V, layer, half = [], [], [], []
    half_n = max(1, cfg.points_per_layer // 2)
    for j in range(cfg.layers):
        for i, zeta in enumerate(_layer_points(d, cfg, j, kappa)):
            lines = []
            if own:
                lines += [(zeta, v) for v in _directions(d, zeta, cfg, j, i)]
            if offsets:
                eta, tan = frame_arrays(d, zeta)
                r = kappa * abs(float(d.rho(zeta)))
                rng = np.random.default_rng([cfg.seed, j, i, 2])
                for m in range(cfg.directions + 1):
                    z1 = 0.0 if m == 0 else r * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
                    lines.append((zeta + z1 * eta, tan[0]))
            for z, v in lines:
                Z.append(z)
                V.append(v)
                layer.append(j)
                half.append(i < half_n)
    return np.array(Z), np.array(V), np.array(layer), np.array(half)


def estimate_c_inf(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, cfg: SamplerConfig,
                   kappa: float = 0.05) -> CriterionReport:
    """Sampled sup of |g_{z,v}[lam_1..lam_k]| tau(z,v,|rho(z)|)^(k-1).

    The universe contains every line used by :func:`estimate_c_inf_kappa_eps`
    with the same configuration, plus free directions at each base point.
    """
    Z, V, layer, half = _universe(d, cfg, kappa, offsets=True, own=True)
    best, wn, wk, po = _sup_over_lines(g, f, d, Z, V, kappa, cfg.max_order, "cinf")
    return _report(best, wn, wk, po, Z, V, layer, half, cfg.levels())


def estimate_c_inf_kappa_eps(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, kappa: float,
                             eps0: float, cfg: SamplerConfig) -> CriterionReport:
    """As :func:`estimate_c_inf` restricted to z = zeta + z1* eta_zeta, |z1*| <= kappa |rho(zeta)|, v = v_zeta."""
    cfg = replace(cfg, rho_top=min(cfg.rho_top, eps0))
    Z, V, layer, half = _universe(d, cfg, kappa, offsets=True, own=False)
    best, wn, wk, po = _sup_over_lines(g, f, d, Z, V, kappa, cfg.max_order, "cinfke")
    return _report(best, wn, wk, po, Z, V, layer, half, cfg.levels())


def estimate_c_eps_interior(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, eps: float,
                            cfg: SamplerConfig, kappa: float = 0.05) -> CriterionReport:
    """Sampled sup over z in D_{-eps/2} (inside the region window) and random directions, all tuple sizes."""
    region = cfg.region or default_region(d)
    n_pts = cfg.layers * cfg.points_per_layer
    Z, V, half = [], [], []
    i = 0
    rng = np.random.default_rng([cfg.seed, 99])
    while len(Z) < n_pts:
        x = rng.standard_normal((256, 2 * d.n))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        x *= rng.uniform(size=(256, 1)) ** (1 / (2 * d.n)) * region.radius
        cand = region.point + x[:, : d.n] + 1j * x[:, d.n :]
        for z in cand[d.rho(cand) < -eps / 2]:
            if len(Z) >= n_pts:
                break
            for _ in range(cfg.directions + 1):
                v = rng.standard_normal(d.n) + 1j * rng.standard_normal(d.n)
                Z.append(z)
                V.append(v / np.linalg.norm(v))
                half.append(i < n_pts // 2)
            i += 1
        if i == 0 and rng.uniform() < 1e-3:
            break
    Z, V, half = np.array(Z), np.array(V), np.array(half)
    best, wn, wk, po = _sup_over_lines(g, f, d, Z, V, kappa, f.total_degree, "ceps")
    return _report(best, wn, wk, po, Z, V, np.zeros(len(Z), int), half, None)


# ---------------------------------------------------------------- integral criterion


@dataclass(frozen=True)
class QuadConfig:
    nodes: int = 24  # radial x angular nodes per refinement step (n = 2)
    max_nodes: int = 96
    rtol: float = 0.25
    qmc_log2: int = 16  # n = 3 slices
    seed: int = 0
    skip_flagged: bool = False
    max_order: int | None = None


def _disc_rule(R, m):
    """Gauss-Legendre in r (weight r dr) times periodic trapezoid in theta on the disc |w| < R."""
    x, w = leggauss(m)
    r = 0.5 * R * (x + 1)
    wr = 0.5 * R * w * r
    th = 2 * np.pi * (np.arange(m) + 0.5) / m
    pts = (r[:, None] * np.exp(1j * th[None, :])).ravel()
    wts = (wr[:, None] * np.full(m, 2 * np.pi / m)[None, :]).ravel()
    return pts, wts


def _slice_rule(n, R1, m, qmc_log2, seed):
    """Points (z1*, z2*, ...) and weights on P'_{R1}: disc(R1) x disc(sqrt R1)^(n-2)."""
    if n == 2:
        p, w = _disc_rule(R1, m)
        return p[:, None], w
    dim = 2 * (n - 1)
    u = qmc.Sobol(dim, scramble=True, seed=seed).random_base2(qmc_log2)
    radii = [R1] + [np.sqrt(R1)] * (n - 2)
    cols = []
    vol = 1.0
    for c, R in enumerate(radii):
        cols.append(R * np.sqrt(u[:, 2 * c]) * np.exp(2j * np.pi * u[:, 2 * c + 1]))
        vol *= np.pi * R * R
    return np.stack(cols, axis=1), np.full(len(u), vol / len(u))


def _slice_integral(g, f, d, zeta, kappa, q, coords, wts, max_order):
    eta, tan = frame_arrays(d, zeta)
    w = tan[0]
    basis = np.vstack([eta[None, :], tan[1:]])  # slice coordinates z1*, z2*, ...
    Zs = zeta + coords @ basis
    V = np.broadcast_to(w, Zs.shape)
    batch = lambda_sets(f, d, Zs, V, kappa)
    # sheets over the slice: roots within 10 disc radii (far roots of nearly
    # degenerate restrictions are irrelevant and numerically fragile)
    near = np.isfinite(batch.roots) & (np.abs(np.nan_to_num(batch.roots, nan=np.inf)) < 10 * batch.radius[:, None])
    if len(np.unique(near.sum(axis=1))) > 1:
        raise TransversalityViolated("fiber degree changes over the slice")
    rj = abs(float(d.rho(zeta)))
    acc = np.zeros(len(Zs))
    mo = max_order or f.total_degree
    for k, rows, dd, _ in _subset_divdiffs(g, Zs, V, batch.roots, batch.usable, mo):
        acc[rows] += rj ** (q * (k - 1) / 2 + 1) * dd**q
    return float(np.dot(acc, wts))


def estimate_c_q(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, atlas: CoveringAtlas,
                 q: float, quad: QuadConfig = QuadConfig()) -> LayerSumSeries:
    """Layer sums of slice integrals over P'_{2 kappa |rho(z_j)|}(z_j), direction = frame tangent."""
    if q < 1:
        raise ValueError("q must be at least 1")
    kappa = atlas.params.kappa
    centers, layer_of = atlas.centers, atlas.layer_index
    rho_c = np.abs(d.rho(centers))
    R1 = 2 * kappa * rho_c
    # balls whose slice lines cannot reach X contribute nothing
    grad = d.w.max() * np.sqrt((d.const + d.collar_width) / d.w.min())
    rho_max = rho_c + 2 * grad * R1 + d.w.max() * (R1**2 + (d.n - 2) * R1)
    reach = np.sqrt(R1**2 + (d.n - 2) * R1) + 3 * kappa * np.sqrt(rho_max / d.w.min())
    skip = f.misses_ball(centers, reach)
    terms, flagged = [], []
    for b in range(len(centers)):
        val = 0.0
        if not skip[b]:
            if d.n == 2:
                m = quad.nodes
                coarse = _slice_integral(g, f, d, centers[b], kappa, q,
                                         *_slice_rule(2, R1[b], m // 2, 0, 0), quad.max_order)
                while True:
                    val = _slice_integral(g, f, d, centers[b], kappa, q,
                                          *_slice_rule(2, R1[b], m, 0, 0), quad.max_order)
                    ok = abs(val - coarse) <= quad.rtol * max(abs(val), 1e-300)
                    if ok or 2 * m > quad.max_nodes:
                        break
                    coarse, m = val, 2 * m
                if not ok:
                    flagged.append(b)
                    if quad.skip_flagged:
                        val = 0.0
            else:
                val = _slice_integral(g, f, d, centers[b], kappa, q,
                                      *_slice_rule(d.n, R1[b], 0, quad.qmc_log2, quad.seed + b),
                                      quad.max_order)
        terms.append((b, int(layer_of[b]), val))
    sums = []
    for L in atlas.layers:
        sums.append(math.fsum(t for _, k, t in terms if k == L.k))
    return LayerSumSeries(q, atlas.params.kappa_tilde, [L.level for L in atlas.layers], sums, terms, flagged)


def fit_layer_exponent(series: LayerSumSeries, tail_start: int = 2) -> float:
    """Least-squares slope of log S_k against k log(1 - c kappa), over k >= tail_start."""
    ks = np.arange(len(series.sums))
    s = np.array(series.sums, dtype=float)
    sel = (ks >= tail_start) & (s > 0)
    if sel.sum() < 4:
        raise InsufficientTail("need at least 4 tail layers with positive sums")
    x = ks[sel] * np.log(series.kappa_tilde)
    return float(np.polyfit(x, np.log(s[sel]), 1)[0])


def fit_power(rhos, values, skip: int = 0) -> float:
    """Slope of log value against log |rho|."""
    r = np.asarray(rhos, dtype=float)[skip:]
    v = np.asarray(values, dtype=float)[skip:]
    sel = v > 0
    if sel.sum() < 2:
        raise InsufficientTail("need at least 2 positive values")
    return float(np.polyfit(np.log(r[sel]), np.log(v[sel]), 1)[0])
