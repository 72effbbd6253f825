"""Polynomial analytic sets X = {f = 0}: line restrictions, root sets, sheet tracking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .domain import DomainDescriptor, as_points, frame_arrays, koranyi_frame, tau
from .errors import ContinuationAmbiguous, TransversalityViolated, ZeroPolynomial

LEAD_RTOL = 1e-13
CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class PolyVariety:
    n: int
    coeffs: dict
    # Maps a point to the nearest singular point of X (None if X is smooth).
    nearest_singularity: Callable | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        coeffs = {tuple(int(e) for e in k): complex(c) for k, c in self.coeffs.items() if c != 0}
        if not coeffs:
            raise ZeroPolynomial("f is identically zero")
        if any(len(k) != self.n for k in coeffs):
            raise ValueError("exponent tuples must have length n")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "_exps", np.array(list(coeffs.keys()), dtype=int))
        object.__setattr__(self, "_vals", np.array(list(coeffs.values()), dtype=complex))

    @property
    def total_degree(self) -> int:
        return int(self._exps.sum(axis=1).max())

    @property
    def coeff_norm(self) -> float:
        return float(np.linalg.norm(self._vals))

    def __call__(self, z) -> np.ndarray:
        z = as_points(z)
        mons = np.prod(z[..., None, :] ** self._exps, axis=-1)
        return mons @ self._vals

    def misses_ball(self, z, R) -> np.ndarray:
        """True where X provably does not meet the Euclidean ball B(z, R).

        Uses |f(z + h) - f(z)| <= R * sum_i sup |d_i f| with the monomial
        majorant of each partial derivative on the polydisc of radius R.
        """
        z = as_points(z)
        R = np.asarray(R, dtype=float)
        big = np.abs(z)[..., None, :] + R[..., None, None]  # (..., 1, n)
        coef = np.abs(self._vals)
        total = np.zeros(np.broadcast_shapes(z.shape[:-1], R.shape))
        for i in range(self.n):
            e = self._exps.copy()
            mult = e[:, i].astype(float)
            e[:, i] = np.maximum(e[:, i] - 1, 0)
            total = total + (np.prod(big**e, axis=-1) * mult) @ coef
        return np.abs(self(z)) > R * total

    def scaled(self, s: complex) -> "PolyVariety":
        return PolyVariety(self.n, {k: s * c for k, c in self.coeffs.items()},
                           self.nearest_singularity, self.name)

    def to_text(self) -> str:
        lines = []
        for k, c in sorted(self.coeffs.items()):
            lines.append(" ".join(str(e) for e in k) + f" {c.real!r} {c.imag!r}")
        return "\n".join(lines) + "\n"


def parse_poly(text: str) -> PolyVariety:
    """Parse lines of ``i j [k] re im`` into a PolyVariety."""
    coeffs: dict = {}
    n = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if n is None:
            n = len(tok) - 2
        if len(tok) != n + 2:
            raise ValueError(f"inconsistent polynomial line: {raw!r}")
        key = tuple(int(t) for t in tok[:n])
        coeffs[key] = coeffs.get(key, 0) + complex(float(tok[n]), float(tok[n + 1]))
    if n is None:
        raise ValueError("empty polynomial")
    return PolyVariety(n, coeffs)


def _origin_singularity(z):
    return np.zeros(np.shape(z)[-1], dtype=complex)


def cusp(q: int) -> PolyVariety:
    """X = {z1^q = z2^2}, f = z2^2 - z1^q."""
    return PolyVariety(2, {(0, 2): 1.0, (q, 0): -1.0},
                       _origin_singularity if q > 1 else None, f"cusp{q}")


def planes(alphas) -> PolyVariety:
    """X = union of the planes z2 = alpha_i z1, f = prod (z2 - alpha_i z1)."""
    poly = {(0, 0): 1.0 + 0j}
    for a in alphas:
        new: dict = {}
        for (i, j), c in poly.items():
            new[(i, j + 1)] = new.get((i, j + 1), 0) + c
            new[(i + 1, j)] = new.get((i + 1, j), 0) - a * c
        poly = new
    sing = _origin_singularity if len(alphas) > 1 else None
    return PolyVariety(2, poly, sing, "planes")


def dm3(q: int) -> PolyVariety:
    """X = {z1^2 + z2^q = 0} in C^3, singular along the z3-axis."""

    def nearest(z):
        z = as_points(z)
        return np.array([0, 0, z[2]], dtype=complex)

    return PolyVariety(3, {(2, 0, 0): 1.0, (0, q, 0): 1.0}, nearest, f"dm3_{q}")


def on_variety(f: PolyVariety, z, tol: float = 1e-10) -> np.ndarray:
    return np.abs(f(z)) <= tol * (1.0 + f.coeff_norm)


# ---------------------------------------------------------------- line restriction


def restrict_to_line(f: PolyVariety, z, v, scale=1.0) -> np.ndarray:
    """Coefficients (ascending powers of lam) of lam -> f(z + lam v).

    Evaluates at d+1 points ``scale * omega^m`` and inverts the DFT.  Batched
    over leading axes of z and v; ``scale`` broadcasts against them.
    """
    z = as_points(z)
    v = as_points(v)
    d = f.total_degree
    m = d + 1
    omega = np.exp(2j * np.pi * np.arange(m) / m)
    s = np.asarray(scale, dtype=float)
    lam = s[..., None] * omega
    pts = z[..., None, :] + lam[..., :, None] * v[..., None, :]
    vals = f(pts)
    b = np.fft.fft(vals, axis=-1) / m
    return b / s[..., None] ** np.arange(m)


# ---------------------------------------------------------------- univariate roots


def _trim(coeffs, atol, rtol=LEAD_RTOL):
    c = np.asarray(coeffs, dtype=complex)
    big = np.max(np.abs(c)) if c.size else 0.0
    if big <= atol:
        raise ZeroPolynomial("all coefficients below tolerance")
    k = c.size - 1
    while k > 0 and abs(c[k]) <= rtol * big:
        k -= 1
    return c[: k + 1]


def _horner(c, x):
    """Evaluate ascending-coefficient polynomial and its derivative."""
    p = np.zeros_like(x) + c[-1]
    dp = np.zeros_like(x)
    for ck in c[-2::-1]:
        dp = dp * x + p
        p = p * x + ck
    return p, dp


def aberth(coeffs, tol: float = 1e-15, max_iter: int = 500):
    """Simultaneous Aberth-Ehrlich iteration; returns (roots, converged)."""
    c = np.asarray(coeffs, dtype=complex)
    d = c.size - 1
    lead = c[-1]
    k = np.arange(d)
    ratios = np.abs(c[:-1] / lead)
    radius = float(np.max(ratios ** (1.0 / (d - k)))) if d else 0.0
    radius = max(radius, 1e-300)
    x = radius * np.exp(1j * (2 * np.pi * k / d + 0.4))
    converged = False
    for _ in range(max_iter):
        p, dp = _horner(c, x)
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        s = inv.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            step = ratio / (1.0 - ratio * s)
        step = np.where(np.isfinite(step), step, 0.0)
        x = x - step
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(x), radius * 1e-3)):
            converged = True
            break
    return x, converged


def roots_univariate(coeffs, tol: float = 1e-9, atol: float = 1e-300) -> np.ndarray:
    """All roots of an ascending-coefficient polynomial.

    Aberth-Ehrlich first; the companion-matrix eigenvalues are the fallback when
    the iteration stalls or the residual check fails.
    """
    c = _trim(coeffs, atol)
    d = c.size - 1
    if d == 0:
        return np.empty(0, dtype=complex)
    x, ok = aberth(c)
    scale = np.sum(np.abs(c) * np.maximum(1.0, np.abs(x[:, None])) ** np.arange(d + 1), axis=1)
    if not ok or np.any(np.abs(_horner(c, x)[0]) > tol * scale):
        x = np.roots(c[::-1]).astype(complex)
    return x


def roots_batch(B: np.ndarray) -> np.ndarray:
    """Roots of many ascending-coefficient polynomials (rows of B).

    Output has shape (m, deg) with NaN padding where a row's effective degree is
    lower (trimmed leading coefficients).  Coefficients are assumed well scaled.
    """
    B = np.asarray(B, dtype=complex)
    m, width = B.shape
    deg = width - 1
    out = np.full((m, deg), np.nan + 0j)
    big = np.max(np.abs(B), axis=1)
    nz = np.abs(B) > LEAD_RTOL * big[:, None]
    eff = np.where(nz.any(axis=1), width - 1 - np.argmax(nz[:, ::-1], axis=1), -1)
    for d in np.unique(eff):
        if d <= 0:
            continue
        rows = np.nonzero(eff == d)[0]
        C = B[rows, : d + 1]
        comp = np.zeros((rows.size, d, d), dtype=complex)
        comp[:, 0, :] = -C[:, d - 1 :: -1] / C[:, d : d + 1]
        if d > 1:
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        r = np.linalg.eigvals(comp)
        for _ in range(2):
            p = np.zeros_like(r) + C[:, d : d + 1]
            dp = np.zeros_like(r)
            for k in range(d - 1, -1, -1):
                dp = dp * r + p
                p = p * r + C[:, k : k + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = p / dp
            r = r - np.where(np.isfinite(step), step, 0.0)
        out[rows, :d] = r
    return out


# ---------------------------------------------------------------- root sets


@dataclass(frozen=True)
class RootSet:
    base: np.ndarray
    direction: np.ndarray
    radius_bound: float
    roots: np.ndarray
    multiplicity: np.ndarray

    @property
    def simple(self) -> np.ndarray:
        """Roots usable as divided-difference nodes (multiplicity one)."""
        return self.roots[self.multiplicity == 1]

    def __len__(self):
        return len(self.roots)


def _cluster(roots, tol):
    roots = list(roots)
    out, mult = [], []
    used = [False] * len(roots)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        group = [r]
        for j in range(i + 1, len(roots)):
            if not used[j] and abs(roots[j] - r) < tol:
                used[j] = True
                group.append(roots[j])
        out.append(np.mean(group))
        mult.append(len(group))
    return np.array(out, dtype=complex), np.array(mult, dtype=int)


def lambda_radius(d: DomainDescriptor, z, v, kappa) -> np.ndarray:
    return 3.0 * kappa * tau(d, z, v, np.abs(d.rho(z)))


def lambda_set(f: PolyVariety, d: DomainDescriptor, z, v, kappa: float,
               cluster_rtol: float = CLUSTER_RTOL) -> RootSet:
    """Points of X on the disc z + lam v, |lam| < 3 kappa tau(z, v, |rho(z)|)."""
    z = as_points(z)
    v = as_points(v)
    radius = float(lambda_radius(d, z, v, kappa))
    B = restrict_to_line(f, z, v, scale=radius) * radius ** np.arange(f.total_degree + 1)
    mu = roots_univariate(B, atol=1e-14 * (1 + f.coeff_norm))
    lam = mu * radius
    lam = lam[np.abs(lam) < radius]
    roots, mult = _cluster(lam, cluster_rtol * radius)
    return RootSet(z, v, radius, roots, mult)


@dataclass
class LambdaBatch:
    """Root sets of many lines at once; ``usable`` marks simple roots inside the disc."""

    roots: np.ndarray  # (m, deg), NaN padded
    usable: np.ndarray  # (m, deg) bool
    radius: np.ndarray  # (m,)
    degree: np.ndarray  # (m,) effective degree of each line restriction


def lambda_sets(f: PolyVariety, d: DomainDescriptor, Z, V, kappa: float,
                radius=None, cluster_rtol: float = CLUSTER_RTOL) -> LambdaBatch:
    Z = as_points(Z)
    V = as_points(V)
    if radius is None:
        radius = lambda_radius(d, Z, V, kappa)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), Z.shape[:-1])
    B = restrict_to_line(f, Z, V, scale=radius) * radius[:, None] ** np.arange(f.total_degree + 1)
    mu = roots_batch(B)
    lam = mu * radius[:, None]
    finite = np.isfinite(lam)
    degree = finite.sum(axis=1)
    inside = finite & (np.abs(np.where(finite, lam, 0)) < radius[:, None])
    usable = inside.copy()
    k = lam.shape[1]
    tol = cluster_rtol * radius
    for i in range(k):
        for j in range(i + 1, k):
            close = inside[:, i] & inside[:, j] & (np.abs(lam[:, i] - lam[:, j]) < tol)
            usable[:, i] &= ~close
            usable[:, j] &= ~close
    return LambdaBatch(lam, usable, radius, degree)


# ---------------------------------------------------------------- sheets


@dataclass
class SheetFamily:
    """Continuity-labelled fiber roots over the disc |z1*| <= radius of a Koranyi ball.

    ``tracks[a, b, i]`` is the i-th sheet value alpha_i(z1*) at grid node
    ``grid[a, b]``; nodes outside the (slightly enlarged) disc hold NaN.
    """

    base: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    radius: float
    grid: np.ndarray
    inside: np.ndarray
    tracks: np.ndarray
    selected: np.ndarray
    level: int
    threshold: float
    f: PolyVariety = field(repr=False)

    @property
    def p0(self) -> int:
        return self.tracks.shape[-1]

    def fiber_roots(self, z1s) -> np.ndarray:
        z1s = np.atleast_1d(np.asarray(z1s, dtype=complex))
        base = self.base + z1s[:, None] * self.eta
        V = np.broadcast_to(self.v, base.shape)
        s = max(self.threshold, 1e-300)
        B = restrict_to_line(self.f, base, V, scale=np.full(z1s.shape, s))
        B = B * s ** np.arange(B.shape[-1])
        r = roots_batch(B) * s
        return r if self.tracks is None else r[:, : self.p0]

    def values_at(self, z1s) -> np.ndarray:
        """Sheet values at arbitrary z1* (shape (k, p0)), labelled via the nearest node."""
        z1s = np.atleast_1d(np.asarray(z1s, dtype=complex))
        roots = self.fiber_roots(z1s)
        flat_grid = self.grid[self.inside]
        flat_tracks = self.tracks[self.inside]
        idx = np.argmin(np.abs(z1s[:, None] - flat_grid[None, :]), axis=1)
        ref = flat_tracks[idx]
        dist = np.abs(ref[:, :, None] - roots[:, None, :])
        perm = np.argmin(dist, axis=2)
        out = np.take_along_axis(roots, perm, axis=1)
        bad = np.array([len(set(p)) != self.p0 for p in perm])
        for k in np.nonzero(bad)[0]:
            _, col = linear_sum_assignment(dist[k])
            out[k] = roots[k, col]
        return out


def _match_step(a, b):
    """Match rows of b to rows of a by nearest neighbour; vectorised over the batch.

    Returns (b permuted to a's labels, ok flags).
    """
    dist = np.abs(a[..., :, None] - b[..., None, :])
    perm = np.argmin(dist, axis=-1)
    matched = np.take_along_axis(b, perm, axis=-1)
    motion = np.take_along_axis(dist, perm[..., None], axis=-1)[..., 0]
    masked = dist.copy()
    np.put_along_axis(masked, perm[..., None], np.inf, axis=-1)
    gap = masked.min(axis=-1) if dist.shape[-1] > 1 else np.full(motion.shape, np.inf)
    p = b.shape[-1]
    sorted_perm = np.sort(perm, axis=-1)
    bijective = np.all(sorted_perm == np.arange(p), axis=-1)
    ok = bijective & np.all(gap > 3.0 * motion, axis=-1)
    return matched, ok


def _consistent(a, b):
    """Are labelled root vectors a, b (same labels) unambiguously adjacent?"""
    dist = np.abs(a[..., :, None] - b[..., None, :])
    p = a.shape[-1]
    diag = dist[..., np.arange(p), np.arange(p)]
    off = dist + np.where(np.eye(p, dtype=bool), np.inf, 0.0)
    gap = off.min(axis=-1) if p > 1 else np.full(diag.shape, np.inf)
    return np.all(gap > 3.0 * diag, axis=-1)


def check_transversality(f: PolyVariety, d: DomainDescriptor, z0, kappa: float):
    if f.nearest_singularity is None:
        return
    frame = koranyi_frame(d, z0)
    s = f.nearest_singularity(z0)
    s1 = complex(np.vdot(frame.eta, s - frame.base))
    need = 2.0 * kappa * abs(float(d.rho(z0)))
    if abs(s1) < need:
        raise TransversalityViolated(
            f"nearest singularity has |z1*| = {abs(s1):.3e} < 2 kappa |rho| = {need:.3e}")


def sheets_over_disc(f: PolyVariety, d: DomainDescriptor, z0, kappa: float,
                     start_level: int = 3, max_level: int = 10,
                     check_precondition: bool = True) -> SheetFamily:
    """Track the fiber roots alpha_i(z1*) over Delta(2 kappa |rho(z0)|)."""
    z0 = as_points(z0)
    if check_precondition:
        check_transversality(f, d, z0, kappa)
    eta, tan = frame_arrays(d, z0)
    v = tan[0]
    rho0 = abs(float(d.rho(z0)))
    R = 2.0 * kappa * rho0
    threshold = np.sqrt(2.0 * kappa * rho0)
    last_bad = None
    for level in range(start_level, max_level + 1):
        m = 2 ** level + 1
        xs = np.linspace(-R, R, m)
        h = xs[1] - xs[0]
        grid = xs[None, :] + 1j * xs[:, None]
        inside = np.abs(grid) <= R + 1.5 * h
        fam = SheetFamily(z0, eta, v, R, grid, inside, None, None, level, threshold, f)
        roots = fam.fiber_roots(grid.ravel()).reshape(m, m, -1)
        finite = np.isfinite(roots).all(axis=-1)
        degs = np.isfinite(roots).sum(axis=-1)[inside]
        if degs.min() != degs.max():
            last_bad = grid[inside][np.argmin(degs)]
            continue
        p = int(degs[0])
        roots = roots[..., :p]
        fam.tracks = None
        c = m // 2
        tracks = np.full((m, m, p), np.nan + 0j)
        ok_all = True
        # centre row outward, then every column outward from the centre row
        tracks[c, c] = roots[c, c]
        for direction in (1, -1):
            b = c
            while 0 <= b + direction < m:
                nb = b + direction
                matched, ok = _match_step(tracks[c, b], roots[c, nb])
                if not ok:
                    ok_all = False
                    last_bad = grid[c, nb]
                    break
                tracks[c, nb] = matched
                b = nb
            if not ok_all:
                break
        if ok_all:
            for direction in (1, -1):
                a = c
                while 0 <= a + direction < m:
                    na = a + direction
                    matched, ok = _match_step(tracks[a], roots[na])
                    if not np.all(ok):
                        ok_all = False
                        last_bad = grid[na, np.argmin(ok)]
                        break
                    tracks[na] = matched
                    a = na
                if not ok_all:
                    break
        if ok_all:
            # monodromy check on edges outside the spanning tree
            cons = _consistent(tracks[:, :-1], tracks[:, 1:])
            edge_in = inside[:, :-1] & inside[:, 1:]
            if not np.all(cons[edge_in]):
                ok_all = False
                aa, bb = np.nonzero(edge_in & ~cons)
                last_bad = grid[aa[0], bb[0]]
        if not ok_all:
            continue
        tracks[~inside] = np.nan
        in_disc = np.abs(grid) <= R
        mins = np.min(np.where(in_disc[..., None], np.abs(tracks), np.inf), axis=(0, 1))
        selected = np.nonzero(mins <= threshold)[0]
        fam.tracks = tracks
        fam.selected = selected
        return fam
    raise ContinuationAmbiguous("root continuation not unambiguous at the refinement cap",
                                node=last_bad)
