"""Strictly convex model domains and their Koranyi geometry.

Every domain here is a diagonal quadric

    rho(z) = sum_i w_i |z_i - a_i|^2 - c,

which covers the Euclidean ball (w_i = 1, c = R^2) and axis-aligned
ellipsoids (w_i = 1/s_i^2, c = 1).  Functions accept a single point of shape
``(n,)`` or a batch of shape ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateGradient, NonPositiveEpsilon, OutsideCollar

GRADIENT_TOL = 1e-12


def as_points(z) -> np.ndarray:
    return np.asarray(z, dtype=complex)


def hdot(x, y) -> np.ndarray:
    """Hermitian inner product <x, y> = sum x_i conj(y_i) over the last axis."""
    return np.sum(np.asarray(x) * np.conj(y), axis=-1)


@dataclass(frozen=True)
class DomainDescriptor:
    kind: str
    center: tuple
    weights: tuple
    const: float
    radius: float | None = None
    semi_axes: tuple | None = None
    # Force the bisection route for tau (generic-domain probe).
    numeric: bool = False
    # Collar {-collar_fraction*|rho(center)| < rho < collar_fraction*|rho(center)|}.
    collar_fraction: float = 1.0

    @classmethod
    def ball(cls, center, radius, **kw) -> "DomainDescriptor":
        center = tuple(complex(c) for c in center)
        if radius <= 0:
            raise ValueError("radius must be positive")
        n = len(center)
        return cls("ball", center, (1.0,) * n, float(radius) ** 2, radius=float(radius), **kw)

    @classmethod
    def ellipsoid(cls, center, semi_axes, **kw) -> "DomainDescriptor":
        center = tuple(complex(c) for c in center)
        semi_axes = tuple(float(s) for s in semi_axes)
        if len(semi_axes) != len(center) or min(semi_axes) <= 0:
            raise ValueError("semi_axes must be n positive reals")
        w = tuple(1.0 / s**2 for s in semi_axes)
        return cls("ellipsoid", center, w, 1.0, semi_axes=semi_axes, **kw)

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def a(self) -> np.ndarray:
        return np.array(self.center, dtype=complex)

    @property
    def w(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)

    @property
    def depth(self) -> float:
        """|rho(center)|, the largest possible |rho| inside D."""
        return self.const

    @property
    def collar_width(self) -> float:
        return self.collar_fraction * self.const

    def rho(self, z) -> np.ndarray:
        z = as_points(z)
        return np.sum(self.w * np.abs(z - self.a) ** 2, axis=-1) - self.const

    def dbar_rho(self, z) -> np.ndarray:
        """d rho / d zbar_i; the conjugate of the holomorphic gradient."""
        return self.w * (as_points(z) - self.a)

    def d_rho(self, z) -> np.ndarray:
        """d rho / d z_i."""
        return np.conj(self.dbar_rho(z))

    def in_collar(self, z) -> np.ndarray:
        return np.abs(self.rho(z)) < self.collar_width

    def level_point(self, u, level) -> np.ndarray:
        """Point on {rho = level} in the direction of the unit vector(s) ``u`` from the center."""
        u = as_points(u)
        scale = np.sqrt(self.const + np.asarray(level, dtype=float))[..., None]
        return self.a + u * scale / np.sqrt(self.w)

    def scale_to_level(self, z, level) -> np.ndarray:
        """Project z onto {rho = level} along the ray from the center."""
        z = as_points(z)
        r2 = self.rho(z) + self.const
        s = np.sqrt((self.const + np.asarray(level, dtype=float)) / r2)
        return self.a + (z - self.a) * np.asarray(s)[..., None]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "center": [[c.real, c.imag] for c in self.center]}
        if self.kind == "ball":
            out["radius"] = self.radius
        else:
            out["semi_axes"] = list(self.semi_axes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DomainDescriptor":
        center = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in data["center"]]
        if data["kind"] == "ball":
            return cls.ball(center, data["radius"])
        if data["kind"] == "ellipsoid":
            return cls.ellipsoid(center, data["semi_axes"])
        raise ValueError(f"unknown domain kind {data['kind']!r}")


def rho(d: DomainDescriptor, z) -> np.ndarray:
    return d.rho(z)


@dataclass(frozen=True)
class KoranyiFrame:
    base: np.ndarray
    eta: np.ndarray
    tangent: np.ndarray  # shape (n-1, n)

    @property
    def basis(self) -> np.ndarray:
        """Rows eta, tangent_1, ..., tangent_{n-1}."""
        return np.vstack([self.eta[None, :], self.tangent])


@dataclass(frozen=True)
class KoranyiBall:
    center: np.ndarray
    eps: float
    frame: KoranyiFrame
    slice_only: bool = field(default=False)

    def contains(self, z) -> np.ndarray:
        c = koranyi_coordinates(self.frame, z)
        inside = np.abs(c[..., 0]) < self.eps
        if not self.slice_only:
            inside &= np.all(np.abs(c[..., 1:]) < np.sqrt(self.eps), axis=-1)
        else:
            # P'_eps: the last tangential coordinate is the free slice direction.
            inside &= np.all(np.abs(c[..., 1:-1]) < np.sqrt(self.eps), axis=-1)
        return inside


def tangent_frame(eta: np.ndarray) -> np.ndarray:
    """Complex-tangent vectors completing ``eta`` (shape (..., n)) to a unitary frame.

    Returns shape (..., n-1, n).
    """
    eta = np.asarray(eta, dtype=complex)
    n = eta.shape[-1]
    if n == 2:
        t = np.stack([np.conj(eta[..., 1]), -np.conj(eta[..., 0])], axis=-1)
        return t[..., None, :]
    if n != 3:
        raise ValueError("only n = 2, 3 are supported")
    order = np.argsort(np.abs(eta), axis=-1, kind="stable")
    eye = np.eye(3, dtype=complex)
    e_i = eye[order[..., 0]]
    e_j = eye[order[..., 1]]
    t1 = e_i - hdot(e_i, eta)[..., None] * eta
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = e_j - hdot(e_j, eta)[..., None] * eta - hdot(e_j, t1)[..., None] * t1
    t2 /= np.linalg.norm(t2, axis=-1, keepdims=True)
    return np.stack([t1, t2], axis=-2)


def frame_arrays(d: DomainDescriptor, zeta):
    """Batched frames: (eta, tangents) with shapes (..., n) and (..., n-1, n)."""
    g = d.dbar_rho(zeta)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(norm < GRADIENT_TOL):
        raise DegenerateGradient("|grad rho| below tolerance")
    eta = g / norm
    return eta, tangent_frame(eta)


def koranyi_frame(d: DomainDescriptor, zeta) -> KoranyiFrame:
    zeta = as_points(zeta)
    eta, tan = frame_arrays(d, zeta)
    return KoranyiFrame(zeta, eta, tan)


def koranyi_coordinates(frame: KoranyiFrame, z) -> np.ndarray:
    diff = as_points(z) - frame.base
    return diff @ np.conj(frame.basis).T


def from_koranyi(frame: KoranyiFrame, coords) -> np.ndarray:
    return frame.base + as_points(coords) @ frame.basis


def koranyi_ball(d: DomainDescriptor, zeta, eps: float) -> KoranyiBall:
    return KoranyiBall(as_points(zeta), float(eps), koranyi_frame(d, zeta))


def _check_collar(d: DomainDescriptor, z):
    if not np.all(d.in_collar(z)):
        raise OutsideCollar("point outside the collar neighbourhood of bD")


def delta_coords(coords) -> np.ndarray:
    """Pseudo-distance from Koranyi coordinates: max(|z1*|, |z_k*|^2)."""
    coords = np.asarray(coords)
    return np.maximum(np.abs(coords[..., 0]), np.max(np.abs(coords[..., 1:]) ** 2, axis=-1))


def delta(d: DomainDescriptor, z, zeta, check_collar: bool = True) -> np.ndarray:
    """delta(z, zeta) = inf{eps : zeta in P_eps(z)}, measured in the frame at z.

    Broadcasts over leading axes of z and zeta.
    """
    z = as_points(z)
    zeta = as_points(zeta)
    if check_collar:
        _check_collar(d, z)
    eta, tan = frame_arrays(d, z)
    diff = zeta - z
    c1 = hdot(diff, eta)
    ct = np.einsum("...i,...ki->...k", diff, np.conj(tan))
    return np.maximum(np.abs(c1), np.max(np.abs(ct) ** 2, axis=-1))


def _line_quadratic(d: DomainDescriptor, z, v):
    """rho(z + lam v) - rho(z) = 2 Re(conj(lam) A) + |lam|^2 q."""
    z = as_points(z)
    v = as_points(v)
    A = np.sum(d.w * (z - d.a) * np.conj(v), axis=-1)
    q = np.sum(d.w * np.abs(v) ** 2, axis=-1)
    return A, q


def tau_closed_form(d: DomainDescriptor, z, v, eps) -> np.ndarray:
    A, q = _line_quadratic(d, z, v)
    b = np.abs(A)
    eps = np.asarray(eps, dtype=float)
    # Root of q r^2 + 2 b r = eps written without cancellation.
    return eps / (b + np.sqrt(b * b + q * eps))


def _max_phase_increment(rho_fn, z, v, r, rho_z, n_phase=64):
    theta = 2 * np.pi * np.arange(n_phase) / n_phase
    pts = z[None, :] + (r * np.exp(1j * theta))[:, None] * v[None, :]
    vals = rho_fn(pts) - rho_z
    k = int(np.argmax(vals))
    step = 2 * np.pi / n_phase
    res = minimize_scalar(
        lambda t: -(rho_fn(z + r * np.exp(1j * t) * v) - rho_z),
        bounds=(theta[k] - step, theta[k] + step),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return max(vals[k], -res.fun)


def tau_bisection(d: DomainDescriptor, z, v, eps, n_phase: int = 64, rtol: float = 1e-13) -> float:
    """Largest r with max_{|lam|=r} rho(z + lam v) - rho(z) < eps, by bisection.

    Only uses ``d.rho``; convexity makes the phase maximum increasing in r.
    """
    z = as_points(z)
    v = as_points(v)
    rho_z = float(d.rho(z))
    lo, hi = 0.0, 1.0
    while _max_phase_increment(d.rho, z, v, hi, rho_z, n_phase) < eps:
        lo, hi = hi, 2 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _max_phase_increment(d.rho, z, v, mid, rho_z, n_phase) < eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tau(d: DomainDescriptor, z, v, eps):
    """Distance from z to {rho = rho(z) + eps} in the complex direction v."""
    if np.any(np.asarray(eps) <= 0):
        raise NonPositiveEpsilon("eps must be positive")
    if d.numeric:
        z = as_points(z)
        if z.ndim == 1:
            return tau_bisection(d, z, v, float(eps))
        V = np.broadcast_to(as_points(v), z.shape)
        E = np.broadcast_to(np.asarray(eps, dtype=float), z.shape[:-1])
        return np.array([tau_bisection(d, zi, vi, ei) for zi, vi, ei in zip(z, V, E)])
    return tau_closed_form(d, z, v, eps)
