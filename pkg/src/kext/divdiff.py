"""Divided differences of traces g on X along complex lines, and the Cauchy-contour oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import as_points
from .errors import CoincidentNodes, OffVarietyNode, RadiusTooSmall
from .variety import PolyVariety, on_variety

NODE_RTOL = 1e-10


class TraceFunction:
    """A function on X evaluated at points of shape (..., n).

    ``kind`` is one of ``"ambient"`` (restriction of an ambient holomorphic G),
    ``"branch"`` (explicit formula on the sheets) or ``"interpolated"``.
    """

    def __init__(self, fn: Callable, kind: str, name: str = "", ambient: Callable | None = None):
        self.fn = fn
        self.kind = kind
        self.name = name
        self.ambient = ambient

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.fn(as_points(z)), dtype=complex)

    def scaled(self, s: complex) -> "TraceFunction":
        amb = None if self.ambient is None else (lambda z, a=self.ambient: s * a(z))
        return TraceFunction(lambda z: s * self.fn(z), self.kind, f"{s}*{self.name}", amb)

    def __repr__(self):
        return f"TraceFunction({self.name!r}, kind={self.kind!r})"


def ambient_trace(G: Callable, name: str = "G") -> TraceFunction:
    return TraceFunction(G, "ambient", name, ambient=G)


def constant_trace(c: complex = 1.0) -> TraceFunction:
    G = lambda z: np.full(np.shape(z)[:-1], complex(c))
    return ambient_trace(G, f"const({c})")


def cusp_ratio_trace(power: float) -> TraceFunction:
    """g = z2 / z1^power with the principal branch of z1^power (Re z1 > 0 on D)."""

    def fn(z):
        return z[..., 1] / z[..., 0] ** power

    return TraceFunction(fn, "branch", f"z2/z1^{power}", ambient=fn)


def planes_trace(alphas, family: str = "power", alpha: float = 0.0, c: complex = 1.0) -> TraceFunction:
    """g(z1, z2) = g_i(z1 (1 + |a_i|^2) - 1) on the plane z2 = a_i z1.

    family ``"power"``: g_i(w) = (1 + w)^alpha; ``"const"``: g_i = c.
    """
    alphas = np.asarray(alphas, dtype=complex)
    if family == "const":
        return TraceFunction(lambda z: np.full(np.shape(z)[:-1], complex(c)), "branch", f"planes-const({c})")
    if family != "power":
        raise ValueError(f"unknown planes family {family!r}")

    def fn(z):
        which = np.argmin(np.abs(z[..., 1, None] - alphas * z[..., 0, None]), axis=-1)
        scale = 1.0 + np.abs(alphas[which]) ** 2
        return (z[..., 0] * scale) ** alpha

    return TraceFunction(fn, "branch", f"planes-power({alpha})")


def dm3_trace(q: int) -> TraceFunction:
    """z1 / (1 - z3)^(q/4) on the unit ball of C^3."""

    def fn(z):
        return z[..., 0] / (1.0 - z[..., 2]) ** (q / 4.0)

    return TraceFunction(fn, "branch", f"dm3({q})", ambient=fn)


def polynomial_trace(P: PolyVariety, name: str = "poly") -> TraceFunction:
    return ambient_trace(P, name)


# ---------------------------------------------------------------- recursion


def _check_nodes(nodes, radius_bound):
    nodes = np.asarray(nodes, dtype=complex)
    if nodes.size > 1:
        gaps = np.abs(nodes[:, None] - nodes[None, :])
        np.fill_diagonal(gaps, np.inf)
        ref = radius_bound if radius_bound is not None else max(1.0, float(np.max(np.abs(nodes))))
        if gaps.min() < NODE_RTOL * ref:
            raise CoincidentNodes("divided-difference nodes are not pairwise distinct")
    return nodes


def _values(g, z, v, nodes, f, tol):
    pts = as_points(z) + nodes[:, None] * as_points(v)
    if f is not None and not np.all(on_variety(f, pts, tol)):
        raise OffVarietyNode("a node z + lam v is not on X")
    return g(pts)


@dataclass(frozen=True)
class DividedDifferenceTable:
    base: np.ndarray
    direction: np.ndarray
    nodes: np.ndarray
    table: list  # table[j][i] = g[lam_i, ..., lam_{i+j}]
    condition: float

    @property
    def top(self) -> complex:
        return complex(self.table[-1][0])

    def newton_coefficients(self) -> np.ndarray:
        return np.array([col[0] for col in self.table])


def newton_columns(values, nodes) -> list:
    values = np.asarray(values, dtype=complex)
    nodes = np.asarray(nodes, dtype=complex)
    cols = [values]
    for j in range(1, len(nodes)):
        prev = cols[-1]
        cols.append((prev[:-1] - prev[1:]) / (nodes[:-j] - nodes[j:]))
    return cols


def newton_table(g: TraceFunction, z, v, nodes, f: PolyVariety | None = None,
                 radius_bound: float | None = None, tol: float = 1e-8) -> DividedDifferenceTable:
    nodes = _check_nodes(nodes, radius_bound)
    vals = _values(g, z, v, nodes, f, tol)
    cols = newton_columns(vals, nodes)
    base = max(float(np.max(np.abs(vals))), 1e-300)
    cond = max(float(np.max(np.abs(c))) for c in cols) / base
    return DividedDifferenceTable(as_points(z), as_points(v), nodes, cols, cond)


def divided_difference(g: TraceFunction, z, v, nodes, f: PolyVariety | None = None,
                       radius_bound: float | None = None, tol: float = 1e-8) -> complex:
    return newton_table(g, z, v, nodes, f, radius_bound, tol).top


def divdiff_batch(values, nodes) -> np.ndarray:
    """Top divided difference along the last axis, vectorised over leading axes."""
    vals = np.asarray(values, dtype=complex)
    nodes = np.asarray(nodes, dtype=complex)
    k = nodes.shape[-1]
    for j in range(1, k):
        vals = (vals[..., :-1] - vals[..., 1:]) / (nodes[..., : k - j] - nodes[..., j:])
    return vals[..., 0]


def newton_eval(coeffs, nodes, x) -> np.ndarray:
    """Evaluate sum_k c_k prod_{l<k} (x - nodes_l); batched over leading axes."""
    coeffs = np.asarray(coeffs)
    nodes = np.asarray(nodes)
    k = coeffs.shape[-1]
    out = np.zeros(np.broadcast_shapes(coeffs.shape[:-1], np.shape(x)), dtype=complex) + coeffs[..., k - 1]
    for j in range(k - 2, -1, -1):
        out = out * (x - nodes[..., j]) + coeffs[..., j]
    return out


def contour_divdiff_oracle(G: Callable, z, v, nodes, radius: float, m_quad: int = 256) -> complex:
    """(1/2 pi i) times the contour integral of G(z + lam v) / prod(lam - lam_i) on |lam| = radius."""
    nodes = np.asarray(nodes, dtype=complex)
    if radius <= 1.05 * float(np.max(np.abs(nodes), initial=0.0)):
        raise RadiusTooSmall("contour must enclose every node with a margin")
    lam = radius * np.exp(2j * np.pi * np.arange(m_quad) / m_quad)
    vals = np.asarray(G(as_points(z) + lam[:, None] * as_points(v)), dtype=complex)
    denom = np.prod(lam[:, None] - nodes[None, :], axis=1)
    return complex(np.mean(vals * lam / denom))
