"""Layered kappa-coverings of the collar D \\ D_{-eps0} by Koranyi balls."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from .domain import DomainDescriptor, as_points, delta, frame_arrays
from .errors import ConfigError, LevelOutOfRange


@dataclass(frozen=True)
class Region:
    """Euclidean window {|z - center| < radius} restricting a covering.

    Layers use the window re-centred at the radial projection of ``center``
    onto their level set, so every layer sees a cap of the same size.
    """

    center: tuple
    radius: float

    @property
    def point(self) -> np.ndarray:
        return np.array(self.center, dtype=complex)

    def contains(self, z) -> np.ndarray:
        return np.linalg.norm(as_points(z) - self.point, axis=-1) < self.radius

    def at_level(self, d: DomainDescriptor, level: float) -> "Region":
        return Region(tuple(d.scale_to_level(self.point, level)), self.radius)


@dataclass(frozen=True)
class CoveringParams:
    kappa: float = 0.05
    c: float = 0.5
    eps0: float = 0.1
    max_layers: int = 10
    region: Region | None = None
    # Prepend the radial projection of this point to every layer's candidate stream.
    anchor: tuple | None = None
    seed: int = 0

    @property
    def kappa_tilde(self) -> float:
        return 1.0 - self.c * self.kappa

    def validate(self, d: DomainDescriptor):
        if not (0 < self.kappa_tilde < 1):
            raise ConfigError("need 1 - c*kappa in (0, 1)")
        if not (0 < self.eps0 < d.depth):
            raise ConfigError("need 0 < eps0 < |rho(center)|")
        if self.max_layers < 0:
            raise ConfigError("max_layers must be non-negative")

    def level(self, k: int) -> float:
        return -(self.kappa_tilde**k) * self.eps0

    def separation(self, k: int) -> float:
        return self.c * self.kappa * self.kappa_tilde**k * self.eps0


@dataclass
class Layer:
    k: int
    level: float
    centers: np.ndarray  # (n_k, n)


@dataclass
class CoveringAtlas:
    params: CoveringParams
    layers: list
    domain: DomainDescriptor = field(repr=False)

    @property
    def centers(self) -> np.ndarray:
        return np.concatenate([L.centers for L in self.layers], axis=0)

    @property
    def layer_index(self) -> np.ndarray:
        return np.concatenate([np.full(len(L.centers), L.k) for L in self.layers])

    @property
    def eps(self) -> np.ndarray:
        """Koranyi radius kappa |rho(z_j)| of every ball."""
        return self.params.kappa * np.abs(self.domain.rho(self.centers))

    def counts(self) -> list:
        return [len(L.centers) for L in self.layers]

    def __len__(self):
        return sum(self.counts())

    def to_json(self) -> str:
        p = self.params
        data = {
            "domain": self.domain.to_dict(),
            "params": {
                "kappa": p.kappa, "c": p.c, "eps0": p.eps0, "max_layers": p.max_layers, "seed": p.seed,
                "region": None if p.region is None else {
                    "center": [[c.real, c.imag] for c in map(complex, p.region.center)],
                    "radius": p.region.radius},
                "anchor": None if p.anchor is None else [[c.real, c.imag] for c in map(complex, p.anchor)],
            },
            "layers": [
                {"k": L.k, "level": L.level, "centers": [[[c.real, c.imag] for c in z] for z in L.centers]}
                for L in self.layers
            ],
        }
        return json.dumps(data, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CoveringAtlas":
        data = json.loads(text)
        d = DomainDescriptor.from_dict(data["domain"])
        p = data["params"]
        cplx = lambda pairs: tuple(complex(a, b) for a, b in pairs)
        region = None if p["region"] is None else Region(cplx(p["region"]["center"]), p["region"]["radius"])
        anchor = None if p["anchor"] is None else cplx(p["anchor"])
        params = CoveringParams(p["kappa"], p["c"], p["eps0"], p["max_layers"], region, anchor, p["seed"])
        layers = []
        for L in data["layers"]:
            arr = np.array([[complex(a, b) for a, b in z] for z in L["centers"]], dtype=complex)
            layers.append(Layer(L["k"], L["level"], arr.reshape(-1, d.n)))
        return cls(params, layers, d)


# ---------------------------------------------------------------- candidate streams


def _real(z):
    z = as_points(z)
    return np.concatenate([z.real, z.imag], axis=-1)


def _unit_directions(d: DomainDescriptor, sample, region: Region | None, level: float):
    """Map a block of uniform samples to unit directions whose level points are candidates."""
    n = d.n
    if region is None:
        x = norm.ppf(np.clip(sample, 1e-12, 1 - 1e-12))
        u = x[:, :n] + 1j * x[:, n:]
        return u / np.linalg.norm(u, axis=1, keepdims=True)
    # gnomonic chart around the direction of the region centre
    sw = np.sqrt(d.w)
    u0 = (region.point - d.a) * sw
    u0 = u0 / np.linalg.norm(u0)
    r0 = np.concatenate([u0.real, u0.imag])
    # orthonormal complement of r0 in R^{2n}
    q, _ = np.linalg.qr(np.column_stack([r0, np.eye(2 * n)]))
    basis = q[:, 1 : 2 * n].T
    half = 1.2 * region.radius * sw.max() / np.sqrt(d.const + level)
    y = (2.0 * sample - 1.0) * half
    r = r0 + y @ basis
    u = r[:, :n] + 1j * r[:, n:]
    # direction in the sqrt(w)-scaled coordinates -> level_point expects these
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _candidate_sampler(d: DomainDescriptor, region, seed):
    dim = 2 * d.n if region is None else 2 * d.n - 1
    return qmc.Sobol(dim, scramble=True, seed=seed)


def _delta_sym(d, x, y):
    return np.minimum(delta(d, x, y, check_collar=False), delta(d, y, x, check_collar=False))


def _frames(d, z):
    eta, tan = frame_arrays(d, z)
    return np.concatenate([eta[:, None, :], tan], axis=1)


def _delta_pairs(x, bx, y, by):
    """min(delta(x, y), delta(y, x)) from precomputed frame bases, pairwise along axis 0."""
    diff = y - x
    cx = np.einsum("mi,mki->mk", diff, np.conj(bx))
    cy = np.einsum("mi,mki->mk", -diff, np.conj(by))
    dx = np.maximum(np.abs(cx[:, 0]), np.max(np.abs(cx[:, 1:]) ** 2, axis=-1))
    dy = np.maximum(np.abs(cy[:, 0]), np.max(np.abs(cy[:, 1:]) ** 2, axis=-1))
    return np.minimum(dx, dy)


def _pairs_from_lists(nbrs):
    ii = np.repeat(np.arange(len(nbrs)), [len(x) for x in nbrs])
    jj = np.fromiter((j for x in nbrs for j in x), dtype=int, count=len(ii))
    return ii, jj


def _greedy_independent(m, a, b):
    """Sequential greedy over 0..m-1 given conflict edges a < b; vectorised by rounds."""
    state = np.zeros(m, dtype=np.int8)  # 0 open, 1 taken, -1 dropped
    while True:
        open_ = state == 0
        if not open_.any():
            return state == 1
        # an open node is blocked while an earlier neighbour is still open
        blocked = np.zeros(m, dtype=bool)
        killed = np.zeros(m, dtype=bool)
        blocked[b[state[a] == 0]] = True
        killed[b[state[a] == 1]] = True
        state[open_ & killed] = -1
        state[open_ & ~killed & ~blocked] = 1


def generate_layer(d: DomainDescriptor, level: float, separation: float, seed: int = 0,
                   region: Region | None = None, anchor=None, sweep: int | None = None,
                   max_sweeps: int = 200, block_size: int = 4096,
                   saturation: float = 0.005) -> np.ndarray:
    """Greedy separated set on {rho = level}.

    Candidates stream from a scrambled Sobol sequence pushed onto the level set;
    a candidate is kept iff its pseudo-distance to every kept point (both
    orders) is at least ``separation``.  Stops after a sweep that adds no more
    than ``saturation`` times the current count (0 gives a maximal set).
    """
    if not (-d.depth < level < 0):
        raise LevelOutOfRange(f"level {level} not in (-|rho(center)|, 0)")
    n = d.n
    reach = np.sqrt(separation**2 + (n - 1) * separation)  # Euclidean bound for delta < sep
    sampler = _candidate_sampler(d, region, seed)
    if region is not None:
        region = region.at_level(d, level)
    acc = np.empty((0, n), dtype=complex)
    acc_f = np.empty((0, n, n), dtype=complex)
    pending = []
    if anchor is not None:
        pending.append(d.scale_to_level(as_points(anchor), level)[None, :])
    for _ in range(max_sweeps):
        size = sweep or max(2048, 32 * len(acc))
        m = int(2 ** np.ceil(np.log2(size)))
        u = _unit_directions(d, sampler.random(m), region, level)
        cand = d.level_point(u, level)
        if region is not None:
            cand = cand[region.contains(cand)]
        if pending:
            cand = np.concatenate(pending + [cand])
            pending = []
        added = 0
        tree = cKDTree(_real(acc)) if len(acc) else None
        for start in range(0, len(cand), block_size):
            block = cand[start : start + block_size]
            bf = _frames(d, block)
            keep = np.ones(len(block), dtype=bool)
            if tree is not None:
                sm = cKDTree(_real(block)).sparse_distance_matrix(tree, reach, output_type="ndarray")
                ii, jj = sm["i"], sm["j"]
                if len(ii):
                    close = _delta_pairs(block[ii], bf[ii], acc[jj], acc_f[jj]) < separation
                    keep[ii[close]] = False
            block, bf = block[keep], bf[keep]
            if not len(block):
                continue
            pairs = cKDTree(_real(block)).query_pairs(reach, output_type="ndarray")
            taken = np.ones(len(block), dtype=bool)
            if len(pairs):
                pairs = np.sort(pairs, axis=1)
                a, b = pairs[:, 0], pairs[:, 1]
                close = _delta_pairs(block[a], bf[a], block[b], bf[b]) < separation
                taken = _greedy_independent(len(block), a[close], b[close])
            added += int(taken.sum())
            acc = np.concatenate([acc, block[taken]])
            acc_f = np.concatenate([acc_f, bf[taken]])
            tree = cKDTree(_real(acc))
        if added <= saturation * (len(acc) - added):
            break
    return acc


def generate_covering(d: DomainDescriptor, params: CoveringParams) -> CoveringAtlas:
    params.validate(d)
    layers = []
    for k in range(params.max_layers + 1):
        level = params.level(k)
        centers = generate_layer(d, level, params.separation(k), seed=params.seed + 7919 * k,
                                 region=params.region, anchor=params.anchor)
        layers.append(Layer(k, level, centers))
    return CoveringAtlas(params, layers, d)


def ray_atlas(d: DomainDescriptor, params: CoveringParams, point) -> CoveringAtlas:
    """One ball per layer: the radial projection of ``point`` onto each level set.

    These are admissible first picks of a greedy covering, so the balls form a
    sub-family of some kappa-covering.
    """
    params.validate(d)
    layers = []
    for k in range(params.max_layers + 1):
        level = params.level(k)
        layers.append(Layer(k, level, d.scale_to_level(as_points(point), level)[None, :]))
    return CoveringAtlas(params, layers, d)


# ---------------------------------------------------------------- verification


def in_probe_domain(atlas: CoveringAtlas, z) -> np.ndarray:
    """Inside the covered shell, with the projection to the point's layer inside the window."""
    d, p = atlas.domain, atlas.params
    z = as_points(z)
    r = -d.rho(z)
    lo = p.kappa_tilde ** (p.max_layers + 1) * p.eps0
    ok = (r > lo) & (r < p.eps0)
    if p.region is None or not ok.any():
        return ok
    k = np.floor(np.log(np.where(ok, r, p.eps0) / p.eps0) / np.log(p.kappa_tilde)).astype(int)
    lev = np.array([p.level(int(j)) for j in np.clip(k, 0, p.max_layers)])
    proj = d.scale_to_level(z, lev)
    ctr = d.scale_to_level(np.broadcast_to(p.region.point, z.shape), lev)
    return ok & (np.linalg.norm(proj - ctr, axis=-1) < p.region.radius)


def shell_probes(atlas: CoveringAtlas, count: int, seed: int = 0) -> np.ndarray:
    """Random points of the covered shell whose projection to their layer lies in the region."""
    d, p = atlas.domain, atlas.params
    rng = np.random.default_rng(seed)
    lo = p.kappa_tilde ** (p.max_layers + 1) * p.eps0
    out = []
    total = 0
    rounds = 0
    while total < count:
        rounds += 1
        if rounds > 50:
            raise ConfigError("region window does not meet the covered shell")
        m = 4 * count
        if p.region is None:
            x = rng.standard_normal((m, 2 * d.n))
        else:
            x = None
        levels = -np.exp(rng.uniform(np.log(lo), np.log(p.eps0), m))
        if x is not None:
            u = x[:, : d.n] + 1j * x[:, d.n :]
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        else:
            u = _unit_directions(d, rng.random((m, 2 * d.n - 1)), p.region, float(levels.max()))
        z = d.level_point(u, levels)
        z = z[in_probe_domain(atlas, z)]
        out.append(z)
        total += len(z)
    return np.concatenate(out)[:count]


def _rho_bound(d: DomainDescriptor, e):
    """Bound on |rho(z) - rho(zeta)| when zeta - z has Koranyi coordinates within (e, sqrt(e))."""
    # |grad rho| <= w_max |zeta - a| and sum w |zeta - a|^2 < 2c on the collar
    grad = d.w.max() * np.sqrt((d.const + d.collar_width) / d.w.min())
    return 2.0 * grad * e + d.w.max() * (e * e + (d.n - 1) * e)


def _layer_pairs(atlas: CoveringAtlas, z, radius_of, chunk: int = 512):
    """Yield (probe index, ball index, layer) candidate pairs, chunked over probes.

    ``radius_of(level, rho_z)`` gives the Euclidean search radius for balls of a
    layer against probes with the given rho values (inf or nan to skip).
    """
    offsets = np.cumsum([0] + atlas.counts())
    rz = atlas.domain.rho(z)
    order = np.argsort(rz)
    for L, off in zip(atlas.layers, offsets[:-1]):
        if not len(L.centers):
            continue
        tree = cKDTree(_real(L.centers))
        reach = radius_of(L.level, rz)
        active = order[np.isfinite(reach[order]) & (reach[order] > 0)]
        for s in range(0, len(active), chunk):
            idx = active[s : s + chunk]
            r = float(reach[idx].max())
            sm = cKDTree(_real(z[idx])).sparse_distance_matrix(tree, r, output_type="ndarray")
            if len(sm):
                yield idx[sm["i"]], off + sm["j"]


def containing_counts(atlas: CoveringAtlas, z, dilation: float = 1.0) -> np.ndarray:
    """Number of atlas balls P_{dilation*eps_j}(z_j) containing each point."""
    d = atlas.domain
    z = as_points(z)
    centers, eps = atlas.centers, dilation * atlas.eps
    kap = dilation * atlas.params.kappa

    def radius_of(level, rz):
        e = kap * abs(level)
        ok = np.abs(rz - level) <= _rho_bound(d, e)
        return np.where(ok, np.sqrt(e * e + (d.n - 1) * e), np.nan)

    frames = _frames(d, centers)
    counts = np.zeros(len(z), dtype=int)
    for ii, jj in _layer_pairs(atlas, z, radius_of):
        c = np.einsum("mi,mki->mk", z[ii] - centers[jj], np.conj(frames[jj]))
        dl = np.maximum(np.abs(c[:, 0]), np.max(np.abs(c[:, 1:]) ** 2, axis=-1))
        counts += np.bincount(ii[dl < eps[jj]], minlength=len(z))
    return counts


def coverage_fraction(atlas: CoveringAtlas, probes) -> float:
    return float(np.mean(containing_counts(atlas, probes) > 0))


def _separation_ok(atlas: CoveringAtlas) -> bool:
    d = atlas.domain
    for L in atlas.layers:
        if len(L.centers) < 2:
            continue
        sep = atlas.params.separation(L.k)
        reach = np.sqrt(sep**2 + (d.n - 1) * sep)
        pairs = cKDTree(_real(L.centers)).query_pairs(reach, output_type="ndarray")
        # coincident points are always within reach
        if len(pairs) and np.any(_delta_sym(d, L.centers[pairs[:, 0]], L.centers[pairs[:, 1]]) < sep):
            return False
    return True


def overlap_statistics(atlas: CoveringAtlas, d: DomainDescriptor, probes, dilation: float = 4.0) -> int:
    """Empirical M: max over probes z of #{j : P_{r_j}(z_j) meets P_{r}(z)}, radii dilated.

    Two balls are declared to meet when the centre offset, in the Koranyi
    frame at the probe, lies in the Minkowski sum of the two coordinate
    polydiscs.
    """
    probes = as_points(probes)
    centers = atlas.centers
    eps_j = dilation * atlas.eps
    kap = dilation * atlas.params.kappa
    eps_z = kap * np.abs(d.rho(probes))

    def radius_of(level, rz):
        ej, ez = kap * abs(level), kap * np.abs(rz)
        e, s = ej + ez, np.sqrt(ej) + np.sqrt(ez)
        ok = np.abs(rz - level) <= _rho_bound(d, e) + _rho_bound(d, s * s)
        return np.where(ok, np.sqrt(e * e + (d.n - 1) * s * s), np.nan)

    frames = _frames(d, probes)
    root_j, root_z = np.sqrt(eps_j), np.sqrt(eps_z)
    counts = np.zeros(len(probes), dtype=int)
    for ii, jj in _layer_pairs(atlas, probes, radius_of):
        c = np.abs(np.einsum("mi,mki->mk", centers[jj] - probes[ii], np.conj(frames[ii])))
        meet = (c[:, 0] < eps_j[jj] + eps_z[ii]) & np.all(
            c[:, 1:] < (root_j[jj] + root_z[ii])[:, None], axis=-1)
        counts += np.bincount(ii[meet], minlength=len(probes))
    return int(counts.max()) if len(counts) else 0


@dataclass
class AtlasReport:
    separation_ok: bool
    coverage_fraction: float
    max_overlap: int


def verify_atlas(atlas: CoveringAtlas, d: DomainDescriptor | None = None, probes: int = 10_000,
                 seed: int = 0, dilation: float = 1.0) -> AtlasReport:
    d = d or atlas.domain
    pts = shell_probes(atlas, probes, seed)
    return AtlasReport(_separation_ok(atlas), coverage_fraction(atlas, pts),
                       overlap_statistics(atlas, d, pts, dilation))


def layer_growth_exponent(atlas: CoveringAtlas, skip: int = 0) -> float:
    """Least-squares slope of log n_k against -log|level_k|."""
    counts = np.array(atlas.counts()[skip:], dtype=float)
    levels = np.array([abs(L.level) for L in atlas.layers[skip:]])
    return float(np.polyfit(-np.log(levels), np.log(counts), 1)[0])
