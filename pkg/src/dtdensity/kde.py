"""Gaussian kernel density estimation from NPMLE weights.

The estimate at ``t`` is ``sum_i f_i K_h(t - x_i)`` with ``f`` the NPMLE
masses; with uniform masses this is the ordinary kernel estimator. No
boundary correction is applied, so some mass leaks outside the domain.

Bandwidth: one-stage direct plug-in (DPI1) with the density functional
psi_4 estimated from the weighted sample. Constants used, for the Gaussian
kernel K:

    R(K) = 1 / (2 sqrt(pi)),   mu_2(K) = 1,   K^(4)(0) = 3 / sqrt(2 pi)
    psi_6 (normal scale)  = -15 / (16 sqrt(pi) sigma^7)
    pilot g               = [-2 K^(4)(0) / (mu_2(K) psi_6 n)]^(1/7)
    psi_4(g)              = sum_i sum_j f_i f_j K_g^(4)(x_i - x_j)
    h                     = [R(K) / (mu_2(K)^2 psi_4 n)]^(1/5)

where sigma is the NPMLE-weighted standard deviation of x. With f = 1/n
this is the textbook unweighted DPI1 rule.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeights, ValidationError, ZeroVariance
from .model import DensityEstimate, EvalGrid, TruncatedSample
from .npmle import NpmleWeights

SQRT_2PI = math.sqrt(2.0 * math.pi)
ROUGHNESS_K = 1.0 / (2.0 * math.sqrt(math.pi))
K4_AT_ZERO = 3.0 / SQRT_2PI


class BandwidthMethod(str, enum.Enum):
    DPI1 = "DPI1"
    FIXED = "Fixed"


@dataclass(frozen=True)
class Bandwidth:
    h: float
    method: BandwidthMethod = BandwidthMethod.FIXED

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ValidationError(f"bandwidth must be positive and finite, got {self.h}")


def gaussian_mixture(points, centers, masses, h) -> np.ndarray:
    """``sum_i masses[i] * phi((points - centers[i]) / h) / h``."""
    z = (np.asarray(points, float)[:, None] - np.asarray(centers, float)[None, :]) / h
    return np.exp(-0.5 * z * z) @ np.asarray(masses, float) / (h * SQRT_2PI)


def kde_estimate(sample: TruncatedSample, weights: NpmleWeights, h,
                 grid: EvalGrid) -> DensityEstimate:
    """Weighted Gaussian KDE on ``grid``.

    Raises DegenerateWeights if the NPMLE solver did not converge.
    """
    if not weights.converged:
        raise DegenerateWeights(
            f"NPMLE did not converge (graph status {weights.status.value}, "
            f"{weights.iterations} iterations)")
    bw = h if isinstance(h, Bandwidth) else Bandwidth(float(h))
    values = gaussian_mixture(grid.points, sample.x, weights.masses, bw.h)
    return DensityEstimate(grid, values, {"h": bw.h, "method": bw.method.value})


def standard_kde(x, h, grid: EvalGrid) -> DensityEstimate:
    """Ordinary (untruncated) Gaussian KDE with equal weights."""
    x = np.asarray(x, float)
    values = gaussian_mixture(grid.points, x, np.full(x.size, 1.0 / x.size), h)
    return DensityEstimate(grid, values, {"h": float(h), "method": "Fixed"})


def _psi4(x, masses, g, chunk=512) -> float:
    total = 0.0
    for start in range(0, x.size, chunk):
        z = (x[start:start + chunk, None] - x[None, :]) / g
        z2 = z * z
        k4 = (z2 * z2 - 6.0 * z2 + 3.0) * np.exp(-0.5 * z2)
        total += masses[start:start + chunk] @ k4 @ masses
    return total / (SQRT_2PI * g ** 5)


def dpi1_bandwidth(sample: TruncatedSample, weights: NpmleWeights) -> Bandwidth:
    """One-stage direct plug-in bandwidth from the weighted sample."""
    x = np.asarray(sample.x, float)
    f = np.asarray(weights.masses, float)
    f = f / f.sum()
    n = x.size
    mean = f @ x
    sigma = math.sqrt(max(f @ (x - mean) ** 2, 0.0))
    if not sigma > 1e-12 * max(1.0, abs(mean)):
        raise ZeroVariance("all observations coincide; DPI1 is undefined")
    psi6 = -15.0 / (16.0 * math.sqrt(math.pi) * sigma ** 7)
    g = (-2.0 * K4_AT_ZERO / (psi6 * n)) ** (1.0 / 7.0)
    psi4 = _psi4(x, f, g)
    if not psi4 > 0:
        raise ZeroVariance(f"non-positive curvature estimate psi4={psi4}")
    h = (ROUGHNESS_K / (psi4 * n)) ** 0.2
    return Bandwidth(h, BandwidthMethod.DPI1)


def extended_grid(sample: TruncatedSample, h, width=6.0, per_h=8) -> EvalGrid:
    """Grid reaching ``width * h`` past the data range, spacing at most h/per_h."""
    h = h.h if isinstance(h, Bandwidth) else float(h)
    lo = float(sample.x.min()) - width * h
    hi = float(sample.x.max()) + width * h
    count = max(101, int(math.ceil((hi - lo) * per_h / h)) + 1)
    return EvalGrid(lo, hi, count)
