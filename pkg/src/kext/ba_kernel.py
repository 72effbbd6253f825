"""Berndtsson-Andersson reproducing kernel for quadratic (ball / ellipsoid) domains.

With rho = sum w_i |zeta_i - a_i|^2 - c and h = -d rho, the density of
C (1 + <h~, zeta - z>)^-(N+n) (dbar h~)^n against Lebesgue measure is, up to the
normalising constant,

    det(d h~_i / d zeta_k-bar) * D^-(N+n),   det = prod(-w_i) * (-c) / rho^(n+1),

where D = (rho + <h, zeta - z>) / rho and the numerator is evaluated as
sum w_i conj(zeta_i - a_i)(z_i - a_i) - c, free of cancellation near z = zeta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .domain import DomainDescriptor, as_points, delta, frame_arrays


@dataclass(frozen=True)
class KernelConfig:
    N: int = 4
    C_cal: complex = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")


@dataclass(frozen=True)
class KernelSample:
    zeta: np.ndarray
    z: np.ndarray
    denominator: complex
    density: complex


def hefer_h(d: DomainDescriptor, zeta) -> np.ndarray:
    """h_i = -d rho / d zeta_i."""
    return -d.d_rho(zeta)


def _numerator(d: DomainDescriptor, zeta, z):
    # rho(zeta) + <h, zeta - z> written without the cancelling |zeta - a|^2 terms
    zeta, z = as_points(zeta), as_points(z)
    return np.sum(d.w * np.conj(zeta - d.a) * (z - d.a), axis=-1) - d.const


def ba_denominator(d: DomainDescriptor, zeta, z) -> np.ndarray:
    return _numerator(d, zeta, z) / d.rho(zeta)


def dbar_htilde_det(d: DomainDescriptor, zeta) -> np.ndarray:
    """det(d h~_i / d zeta_k-bar) for h~ = h / rho (matrix determinant lemma)."""
    r = d.rho(zeta)
    return np.prod(-d.w) * (-d.const) / r ** (d.n + 1)


def ba_density(d: DomainDescriptor, zeta, z, cfg: KernelConfig) -> np.ndarray:
    zeta, z = as_points(zeta), as_points(z)
    r = d.rho(zeta)
    num = _numerator(d, zeta, z)
    m = cfg.N + d.n
    # det * (rho / num)^m, grouped so the rho powers cancel before overflow can bite
    return cfg.C_cal * np.prod(-d.w) * (-d.const) * r ** (cfg.N - 1) / num**m


def kernel_sample(d: DomainDescriptor, zeta, z, cfg: KernelConfig) -> KernelSample:
    zeta, z = as_points(zeta), as_points(z)
    return KernelSample(zeta, z, complex(ba_denominator(d, zeta, z)), complex(ba_density(d, zeta, z, cfg)))


def analytic_constant(n: int, N: int) -> float:
    """Normalisation of the weighted Bergman kernel the density reduces to on ellipsoids."""
    return math.gamma(n + N) / (math.pi**n * math.gamma(N))


# ---------------------------------------------------------------- QMC reproduction


@dataclass(frozen=True)
class Estimate:
    value: complex
    stderr: float
    points: int

    def to_dict(self):
        return {"re": self.value.real, "im": self.value.imag, "stderr": self.stderr, "points": self.points}


def _box(d: DomainDescriptor):
    half = np.sqrt(d.const / d.w)
    lo = np.concatenate([d.a.real - half, d.a.imag - half])
    return lo, lo + 2 * np.concatenate([half, half])


def qmc_integral(d: DomainDescriptor, integrand, points: int = 2**20, replicates: int = 8,
                 seed: int = 0, batch: int = 2**16) -> Estimate:
    """Integral over D of integrand(zeta) by scrambled Sobol with box rejection.

    ``points`` is split over independent scramblings (each a power of two);
    the standard error is that of the replicate means.
    """
    lo, hi = _box(d)
    vol = float(np.prod(hi - lo))
    n = d.n
    m = max(math.ceil(math.log2(max(points / replicates, 2))), 1)
    per = 2**m
    means = []
    for r in range(replicates):
        eng = qmc.Sobol(2 * n, scramble=True, seed=np.random.default_rng([seed, r]))
        partial = []
        left = per
        while left:
            k = min(batch, left)
            x = qmc.scale(eng.random(k), lo, hi)
            zeta = x[:, :n] + 1j * x[:, n:]
            inside = d.rho(zeta) < 0
            vals = np.zeros(k, dtype=complex)
            vals[inside] = integrand(zeta[inside])
            partial.append(vals.sum())
            left -= k
        means.append(vol * math.fsum(np.real(partial)) / per + 1j * vol * math.fsum(np.imag(partial)) / per)
    means = np.array(means)
    err = float(np.std(means, ddof=1) / np.sqrt(replicates)) if replicates > 1 else float("nan")
    return Estimate(complex(means.mean()), err, per * replicates)


def reproduce(d: DomainDescriptor, G, z, cfg: KernelConfig, points: int = 2**20, replicates: int = 8,
              seed: int = 0) -> Estimate:
    z = as_points(z)
    return qmc_integral(d, lambda zeta: G(zeta) * ba_density(d, zeta, z, cfg), points, replicates, seed)


CALIBRATION_SEED = 1009


def calibrate(d: DomainDescriptor, N: int, z0=None, points: int = 2**20, seed: int = CALIBRATION_SEED) -> KernelConfig:
    """Fix C_cal so that the constant 1 is reproduced at z0 (default: the centre)."""
    z0 = d.a if z0 is None else as_points(z0)
    est = reproduce(d, lambda zeta: np.ones(len(zeta)), z0, KernelConfig(N, 1.0), points, seed=seed)
    return KernelConfig(N, 1.0 / est.value)


# ---------------------------------------------------------------- kernel estimates


@dataclass
class KernelEstimateReport:
    lower_ratio: float  # min |rho(zeta) + <h, zeta - z>| / (eps + |rho(zeta)| + |rho(z)|)
    h1_max: float  # max |h_1*|
    h2_ratio: float  # max |h_2*| / eps^(1/2)
    samples: int

    def to_dict(self):
        return dict(vars(self))


def sample_pairs(d: DomainDescriptor, count: int, seed: int = 0, depth=(1e-3, 0.1), eps=(1e-3, 0.1)):
    """(zeta, z, eps) with zeta in the collar and eps/2 <= delta(zeta, z) <= eps, z in D."""
    rng = np.random.default_rng(seed)
    n = d.n
    out_zeta, out_z, out_e = [], [], []
    total = 0
    while total < count:
        m = 4 * count
        u = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        lev = -np.exp(rng.uniform(np.log(depth[0]), np.log(depth[1]), m)) * d.const
        zeta = d.level_point(u, lev)
        e = np.exp(rng.uniform(np.log(eps[0]), np.log(eps[1]), m)) * d.const
        # Koranyi offsets on the shell 1/2 <= max(|w1|/e, |w'|^2/e) <= 1
        s = rng.uniform(0.5, 1.0, m)
        w = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        w[:, 0] *= e / np.abs(w[:, 0]) * rng.uniform(0, 1, m)
        if n > 1:
            w[:, 1:] *= np.sqrt(e)[:, None] / np.linalg.norm(w[:, 1:], axis=1, keepdims=True) * np.sqrt(rng.uniform(0, 1, m))[:, None]
        scale = np.maximum(np.abs(w[:, 0]) / e, np.sum(np.abs(w[:, 1:]) ** 2, axis=1) / e)
        w[:, 0] *= s / scale
        w[:, 1:] *= np.sqrt(s / scale)[:, None]
        eta, tan = frame_arrays(d, zeta)
        z = zeta + w[:, :1] * eta + np.einsum("mk,mkn->mn", w[:, 1:], tan)
        keep = d.rho(z) < 0
        out_zeta.append(zeta[keep])
        out_z.append(z[keep])
        out_e.append(e[keep])
        total += int(keep.sum())
    return (np.concatenate(out_zeta)[:count], np.concatenate(out_z)[:count], np.concatenate(out_e)[:count])


def kernel_estimates(d: DomainDescriptor, count: int = 10000, seed: int = 0) -> KernelEstimateReport:
    zeta, z, e = sample_pairs(d, count, seed)
    num = np.abs(_numerator(d, zeta, z))
    lower = num / (e + np.abs(d.rho(zeta)) + np.abs(d.rho(z)))
    # h in Koranyi coordinates at z: coefficient along the frame vector b is sum_k h_k b_k
    h = hefer_h(d, zeta)
    eta, tan = frame_arrays(d, z)
    h1 = np.abs(np.sum(h * eta, axis=-1))
    h2 = np.linalg.norm(np.einsum("mn,mkn->mk", h, tan), axis=-1)
    return KernelEstimateReport(float(lower.min()), float(h1.max()), float((h2 / np.sqrt(e)).max()), len(e))


def check_pseudodistance(d: DomainDescriptor, zeta, z) -> np.ndarray:
    """delta(zeta, z), used to confirm the sampled shells."""
    return delta(d, zeta, z, check_collar=False)
