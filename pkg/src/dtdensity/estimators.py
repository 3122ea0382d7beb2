"""Uniform entry point for the three density estimators.

``spline-ord`` and ``spline-cor`` are the ordinary and truncation-corrected
smoothing splines, ``kde`` is the NPMLE-weighted kernel estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

from .kde import Bandwidth, dpi1_bandwidth, kde_estimate
from .model import DensityEstimate, EvalGrid, TruncatedSample
from .npmle import is_degenerate, solve_npmle
from .spline import DEFAULT_ALPHA, Mode, fit_spline

METHODS = ("spline-ord", "spline-cor", "kde")
SPLINE_MODES = {"spline-ord": Mode.ORDINARY, "spline-cor": Mode.CORRECTED}


@dataclass(frozen=True)
class MethodSpec:
    """An estimator and its tuning options.

    ``lam`` fixes the spline smoothing parameter (None: cross-validate);
    ``bandwidth`` is ``"dpi1"`` or a positive number for the KDE.
    """

    method: str
    lam: Optional[float] = None
    alpha: float = DEFAULT_ALPHA
    bandwidth: Union[str, float] = "dpi1"
    q: Optional[int] = None
    quad_size: int = 200
    npmle_tol: float = 1e-8
    npmle_max_iter: int = 10000
    degenerate_threshold: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")

    def run(self, sample: TruncatedSample, grid: EvalGrid) -> DensityEstimate:
        return estimate(sample, self, grid)

    def frozen_from(self, point: DensityEstimate) -> "MethodSpec":
        """Same estimator with lambda or h pinned to the values used for
        ``point``."""
        if self.method == "kde":
            return replace(self, bandwidth=float(point.info["h"]))
        return replace(self, lam=float(point.info["lambda"]))


def estimate(sample: TruncatedSample, spec: Union[MethodSpec, str],
             grid: Optional[EvalGrid] = None) -> DensityEstimate:
    """Run one estimator; the result's ``info`` carries its tuning details."""
    if isinstance(spec, str):
        spec = MethodSpec(spec)
    grid = grid or EvalGrid.for_sample(sample)
    if spec.method in SPLINE_MODES:
        fit = fit_spline(sample, SPLINE_MODES[spec.method], lam=spec.lam,
                         alpha=spec.alpha, q=spec.q, quad_size=spec.quad_size)
        est = fit.estimate(grid)
        est.info.update(cv_trace=[list(p) for p in fit.cv_trace],
                        converged=fit.converged, degenerate=False)
        return est

    weights = solve_npmle(sample, tol=spec.npmle_tol, max_iter=spec.npmle_max_iter)
    if spec.bandwidth == "dpi1":
        h = dpi1_bandwidth(sample, weights) if weights.converged else None
    else:
        h = Bandwidth(float(spec.bandwidth))
    est = kde_estimate(sample, weights, h, grid)
    est.info.update(degenerate=is_degenerate(weights, spec.degenerate_threshold),
                    npmle_iterations=weights.iterations)
    return est
