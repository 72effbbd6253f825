"""Smooth extension of a trace g off X: per-ball Newton interpolants in the
tangential coordinate, glued with a Shepard-normalised flat-top partition of unity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .covering import CoveringAtlas, _real, in_probe_domain, shell_probes
from .divdiff import TraceFunction, newton_columns, newton_eval
from .domain import DomainDescriptor, as_points, frame_arrays
from .errors import ConfigError, OutsideCoveredShell, StepUnderflow
from .variety import PolyVariety, SheetFamily, restrict_to_line, roots_batch, sheets_over_disc

PLATEAU = 1.0  # profile equals 1 for t <= PLATEAU
SUPPORT = 2.0  # and vanishes for t >= SUPPORT


def _profile(t):
    """C-infinity step: 1 on [0, 1], 0 on [2, inf), exp-based transition."""
    t = np.asarray(t, dtype=float)
    s = np.clip((t - PLATEAU) / (SUPPORT - PLATEAU), 0.0, 1.0)

    def psi(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = psi(1.0 - s), psi(s)
    return a / (a + b)


@dataclass
class LocalInterpolant:
    """g~_j(z) = sum_k g[alpha_1..alpha_k](z1*) prod_{l<k} (z2* - alpha_l(z1*)) on ball j."""

    center: np.ndarray
    eps: float
    eta: np.ndarray
    tangent: np.ndarray
    sheets: SheetFamily | None
    g: TraceFunction = field(repr=False)

    @property
    def empty(self) -> bool:
        return self.sheets is None or len(self.sheets.selected) == 0

    def coords(self, z) -> np.ndarray:
        diff = as_points(z) - self.center
        return np.stack([diff @ np.conj(self.eta), diff @ np.conj(self.tangent)], axis=-1)

    def node_coefficients(self) -> np.ndarray:
        """Newton coefficients at every grid node inside the disc, shape (nodes, q_j)."""
        fam = self.sheets
        z1 = fam.grid[fam.inside]
        alpha = fam.tracks[fam.inside][:, fam.selected]
        return self._coefficients(z1, alpha)

    def _coefficients(self, z1, alpha):
        pts = self.center + z1[:, None, None] * self.eta + alpha[..., None] * self.tangent
        vals = self.g(pts)
        k = alpha.shape[1]
        coeffs = np.empty((len(z1), k), dtype=complex)
        for i in range(len(z1)):
            cols = newton_columns(vals[i], alpha[i])
            coeffs[i] = [c[0] for c in cols]
        return coeffs

    def __call__(self, z) -> np.ndarray:
        z = as_points(z)
        out = np.zeros(z.shape[:-1], dtype=complex)
        if self.empty:
            return out
        c = self.coords(z.reshape(-1, z.shape[-1]))
        fam = self.sheets
        alpha = fam.values_at(c[:, 0])[:, fam.selected]
        coeffs = self._coefficients(c[:, 0], alpha)
        return newton_eval(coeffs, alpha, c[:, 1]).reshape(out.shape)


def _meets_variety(f: PolyVariety, d: DomainDescriptor, z0, kappa: float, m: int = 9) -> bool:
    """Coarse test whether some fibre root over the dilated disc is within the sheet threshold."""
    eta, tan = frame_arrays(d, z0)
    rho0 = abs(float(d.rho(z0)))
    R = 2 * kappa * rho0
    thr = np.sqrt(2 * kappa * rho0)
    xs = np.linspace(-R, R, m)
    g = (xs[None, :] + 1j * xs[:, None]).ravel()
    g = g[np.abs(g) <= R * (1 + 1.0 / m)]
    base = z0 + g[:, None] * eta
    V = np.broadcast_to(tan[0], base.shape)
    B = restrict_to_line(f, base, V, scale=np.full(len(g), thr)) * thr ** np.arange(f.total_degree + 1)
    r = roots_batch(B)
    # slack covers root motion between coarse nodes
    return bool(np.nanmin(np.abs(r), initial=np.inf) <= 2.0)


def local_interpolant(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, center, kappa: float,
                      **sheet_kw) -> LocalInterpolant:
    center = as_points(center)
    eta, tan = frame_arrays(d, center)
    eps = kappa * abs(float(d.rho(center)))
    fam = None
    if _meets_variety(f, d, center, kappa):
        fam = sheets_over_disc(f, d, center, kappa, **sheet_kw)
    return LocalInterpolant(center, eps, eta, tan[0], fam, g)


@dataclass
class GluedExtension:
    atlas: CoveringAtlas
    interpolants: list
    kappa: float

    def __post_init__(self):
        self._tree = cKDTree(_real(self.atlas.centers))
        eps = np.array([ip.eps for ip in self.interpolants])
        self._eps = eps
        self._reach = float(np.sqrt((SUPPORT * eps.max()) ** 2 + SUPPORT * eps.max()))
        self._eta = np.array([ip.eta for ip in self.interpolants])
        self._tan = np.array([ip.tangent for ip in self.interpolants])

    def raw_weights(self, z):
        """Sparse raw bump weights: (point index, ball index, weight) with weight > 0."""
        z = as_points(z)
        nbrs = self._tree.query_ball_point(_real(z), self._reach)
        ii = np.repeat(np.arange(len(z)), [len(x) for x in nbrs])
        jj = np.fromiter((j for x in nbrs for j in x), dtype=int, count=len(ii))
        diff = z[ii] - self.atlas.centers[jj]
        c1 = np.abs(np.sum(diff * np.conj(self._eta[jj]), axis=-1))
        c2 = np.abs(np.sum(diff * np.conj(self._tan[jj]), axis=-1))
        e = self._eps[jj]
        w = _profile(c1 / e) * _profile(c2**2 / e)
        keep = w > 0
        return ii[keep], jj[keep], w[keep]

    def partition_sums(self, z) -> np.ndarray:
        z = as_points(z)
        ii, jj, w = self.raw_weights(z)
        return np.bincount(ii, weights=w, minlength=len(z))

    def weights(self, z):
        z = as_points(z)
        ii, jj, w = self.raw_weights(z)
        total = np.bincount(ii, weights=w, minlength=len(z))
        if np.any(total == 0):
            raise OutsideCoveredShell("point not in the support of any ball")
        return ii, jj, w / total[ii]

    def __call__(self, z) -> np.ndarray:
        z = as_points(z)
        shape = z.shape[:-1]
        z = z.reshape(-1, z.shape[-1])
        ii, jj, chi = self.weights(z)
        out = np.zeros(len(z), dtype=complex)
        for j in np.unique(jj):
            sel = jj == j
            ip = self.interpolants[j]
            if ip.empty:
                continue
            out += np.bincount(ii[sel], weights=(chi[sel] * ip(z[ii[sel]])).real, minlength=len(z))
            out += 1j * np.bincount(ii[sel], weights=(chi[sel] * ip(z[ii[sel]])).imag, minlength=len(z))
        return out.reshape(shape)


def variety_probes(f: PolyVariety, atlas: CoveringAtlas, count: int, seed: int = 0) -> np.ndarray:
    """Random points of X between the outer and inner layer levels, inside the region window.

    The leading coordinates are drawn around the window centre and the last one is
    solved for along e_n.
    """
    d, p = atlas.domain, atlas.params
    if p.region is None:
        raise ConfigError("variety probes need a region window")
    rng = np.random.default_rng(seed)
    n = d.n
    deep, shallow = p.level(0), p.level(p.max_layers)
    e_n = np.zeros(n, dtype=complex)
    e_n[-1] = 1.0
    out, total = [], 0
    for _ in range(200):
        m = 8 * count
        w = p.region.point[: n - 1] + p.region.radius * (rng.uniform(-1, 1, (m, n - 1))
                                                         + 1j * rng.uniform(-1, 1, (m, n - 1)))
        base = np.concatenate([w, np.zeros((m, 1))], axis=1)
        r = roots_batch(restrict_to_line(f, base, np.broadcast_to(e_n, base.shape)))
        ok = np.isfinite(r)
        z = np.repeat(base, r.shape[1], axis=0)
        z[:, -1] = r.ravel()
        z = z[ok.ravel()]
        rho = d.rho(z)
        z = z[(rho > deep) & (rho < shallow)]
        z = z[in_probe_domain(atlas, z)]
        out.append(z)
        total += len(z)
        if total >= count:
            return rng.permutation(np.concatenate(out))[:count]
    raise ConfigError("region window does not meet X inside the covered shell")


def build_extension(g: TraceFunction, f: PolyVariety, d: DomainDescriptor, atlas: CoveringAtlas,
                    **sheet_kw) -> GluedExtension:
    kappa = atlas.params.kappa
    interps = [local_interpolant(g, f, d, c, kappa, **sheet_kw) for c in atlas.centers]
    return GluedExtension(atlas, interps, kappa)


def evaluate_extension(ext: GluedExtension, z) -> np.ndarray:
    return ext(z)


def bump_weight(center, eps: float, eta, tangent, z) -> np.ndarray:
    """Raw flat-top weight of the ball P_eps(center) at z."""
    diff = as_points(z) - as_points(center)
    c1 = np.abs(diff @ np.conj(eta))
    c2 = np.abs(diff @ np.conj(tangent))
    return _profile(c1 / eps) * _profile(c2**2 / eps)


# ---------------------------------------------------------------- derivative checks


def _dbar_stencil(u, h):
    """d/d(conj u) ~ (D_s + i D_t) / 2 with central differences along u and i u."""
    return {h * u: 0.25 / h, -h * u: -0.25 / h, 1j * h * u: 0.25j / h, -1j * h * u: -0.25j / h}


ORDERS = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@dataclass
class DerivativeReport:
    sup: dict  # (alpha, beta) -> sup |weighted derivative|
    mean_q: dict  # (alpha, beta) -> L^q mean over probes
    probes: int

    def to_dict(self):
        return {"sup": {f"{a},{b}": v for (a, b), v in self.sup.items()},
                "mean_q": {f"{a},{b}": v for (a, b), v in self.mean_q.items()}, "probes": self.probes}


def dbar_derivatives(F, d: DomainDescriptor, z, kappa: float, order, min_step: float = 1e-9):
    """Weighted anti-holomorphic derivative |rho|^(a + b/2) d^(a+b) F / d(conj eta)^a d(conj v)^b."""
    z = np.atleast_2d(as_points(z))
    a, b = order
    eta, tan = frame_arrays(d, z)
    r = np.abs(d.rho(z))
    he = kappa * r / 8
    hv = np.sqrt(kappa * r) / 8
    if np.any(he < min_step):
        raise StepUnderflow("finite-difference step below floor")
    out = np.empty(len(z), dtype=complex)
    for i in range(len(z)):
        # offsets are (normal, tangent) coefficient pairs; coincident offsets accumulate
        st = {(0j, 0j): 1.0}
        for axis, h, times in ((0, he[i], a), (1, hv[i], b)):
            for _ in range(times):
                nxt: dict = {}
                for k, c in st.items():
                    for o, w in _dbar_stencil(1.0, h).items():
                        key = (k[0] + o, k[1]) if axis == 0 else (k[0], k[1] + o)
                        nxt[key] = nxt.get(key, 0) + c * w
                st = nxt
        pts = np.array([z[i] + k[0] * eta[i] + k[1] * tan[i, 0] for k in st])
        coef = np.array(list(st.values()))
        out[i] = np.dot(coef, F(pts)) * r[i] ** (a + b / 2)
    return out


def stencil_covered_probes(ext: GluedExtension, count: int, seed: int = 0) -> np.ndarray:
    """Shell probes whose order-2 difference stencils lie inside the support of the partition."""
    d = ext.atlas.domain
    out, total = [], 0
    for r in range(50):
        z = shell_probes(ext.atlas, 4 * count, seed=seed + 7919 * r)
        eta, tan = frame_arrays(d, z)
        rr = np.abs(d.rho(z))
        he = (ext.kappa * rr / 8)[:, None]
        hv = (np.sqrt(ext.kappa * rr) / 8)[:, None]
        ok = ext.partition_sums(z) > 0
        for u in (1, -1, 1j, -1j):
            for s_e, s_v in ((2, 0), (0, 2), (1, 1)):
                off = z + u * (s_e * he * eta + s_v * hv * tan[:, 0])
                ok &= ext.partition_sums(off) > 0
        out.append(z[ok])
        total += int(ok.sum())
        if total >= count:
            return np.concatenate(out)[:count]
    raise ConfigError("too few probes with covered stencils")


def _refine_sup(ext: GluedExtension, d: DomainDescriptor, z0, order, reach: float = 8.0) -> float:
    """Locally maximise the weighted derivative around z0 over Koranyi-scaled offsets."""
    eta, tan = frame_arrays(d, z0)
    r = abs(float(d.rho(z0)))
    he, hv = ext.kappa * r, np.sqrt(ext.kappa * r)

    def neg(x):
        if np.max(np.abs(x)) > reach:
            return 0.0
        z = z0 + (x[0] + 1j * x[1]) * he / 8 * eta + (x[2] + 1j * x[3]) * hv / 8 * tan[0]
        if not in_probe_domain(ext.atlas, z[None])[0]:
            return 0.0
        try:
            return -abs(dbar_derivatives(ext, d, z[None], ext.kappa, order)[0])
        except OutsideCoveredShell:
            return 0.0

    res = minimize(neg, np.zeros(4), method="Nelder-Mead",
                   options={"initial_simplex": np.vstack([np.zeros(4), 2 * np.eye(4)]), "maxfev": 150})
    return -float(res.fun)


def check_derivative_bounds(ext: GluedExtension, d: DomainDescriptor, probes, max_order: int = 2,
                            q: float = 2.0, refine: int = 3) -> DerivativeReport:
    """Suprema and L^q means of the weighted anti-holomorphic derivatives over the probes.

    The ``refine`` largest probes per order seed a local maximisation, which makes
    the supremum far less sensitive to the probe count.
    """
    if max_order > 2:
        raise ValueError("max_order must be at most 2")
    probes = as_points(probes)
    sup, mean = {}, {}
    for order in ORDERS:
        if sum(order) > max_order:
            continue
        vals = np.abs(dbar_derivatives(ext, d, probes, ext.kappa, order))
        best = float(vals.max())
        for i in np.argsort(vals)[::-1][:refine]:
            best = max(best, _refine_sup(ext, d, probes[i], order))
        sup[order] = best
        mean[order] = float(np.mean(vals**q) ** (1 / q))
    return DerivativeReport(sup, mean, len(probes))
