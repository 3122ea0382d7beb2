"""Pointwise percentile bootstrap bands for any of the estimators.

Records are resampled jointly as (u, v, x) triplets. Replicate ``b`` uses its
own random stream keyed by ``(seed, b)``, so results do not depend on the
order in which replicates are computed. Records are put in a canonical order
first, so permuting the input leaves the bands unchanged.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DTDensityError, TooManyFailures, ValidationError
from .estimators import MethodSpec
from .model import DensityEstimate, EvalGrid, TruncatedSample

Estimator = Union[MethodSpec, Callable[[TruncatedSample, EvalGrid], DensityEstimate]]


@dataclass(frozen=True, eq=False)
class BootstrapBands:
    grid: EvalGrid
    lower: np.ndarray
    upper: np.ndarray
    point: DensityEstimate
    replicates_used: int
    replicates_failed: int
    level: float = 0.95
    replicates: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.points.tolist(),
            "point": self.point.values.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "level": self.level,
            "replicates_used": self.replicates_used,
            "failed": self.replicates_failed,
        }


def percentile_bands(replicates, level=0.95):
    """Pointwise (1-level)/2 and 1-(1-level)/2 quantiles (linear interpolation)."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must be in (0, 1), got {level}")
    tail = 0.5 * (1.0 - level)
    lower, upper = np.quantile(np.asarray(replicates, float), [tail, 1.0 - tail],
                               axis=0, method="linear")
    return lower, upper


def _run(estimator, sample, grid):
    if isinstance(estimator, MethodSpec):
        return estimator.run(sample, grid)
    return estimator(sample, grid)


def _replicate(args):
    estimator, sample, grid, seed, b = args
    rng = np.random.default_rng([seed, b])
    draw = sample.subset(rng.integers(0, sample.n, sample.n))
    try:
        est = _run(estimator, draw, grid)
    except DTDensityError:
        return None
    if est.info.get("degenerate"):
        return None
    return est.values


def bootstrap_bands(sample: TruncatedSample, estimator: Estimator, B=250,
                    level=0.95, seed=0, grid: Optional[EvalGrid] = None,
                    reselect=True, workers=1) -> BootstrapBands:
    """Percentile bands from ``B`` resamples of the records.

    Parameters
    ----------
    estimator : MethodSpec or callable(sample, grid) -> DensityEstimate
    reselect : bool
        Re-select lambda or h inside each replicate. When False, the value
        chosen on the original sample is reused.

    Raises
    ------
    TooManyFailures
        If more than half of the replicates fail or come out degenerate.
    """
    if B < 1:
        raise ValidationError("need B >= 1")
    grid = grid or EvalGrid.for_sample(sample)
    # a canonical record order makes the draws, and so the bands, independent
    # of how the input was sorted
    sample = sample.subset(np.lexsort((sample.v, sample.u, sample.x)))
    point = _run(estimator, sample, grid)
    if not reselect and isinstance(estimator, MethodSpec):
        estimator = estimator.frozen_from(point)

    tasks = [(estimator, sample, grid, seed, b) for b in range(B)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=1))
    else:
        results = [_replicate(t) for t in tasks]

    good = [r for r in results if r is not None]
    failed = B - len(good)
    if failed > B / 2:
        raise TooManyFailures(f"{failed} of {B} bootstrap replicates failed")
    reps = np.vstack(good)
    lower, upper = percentile_bands(reps, level)
    return BootstrapBands(grid, lower, upper, point, len(good), failed, level, reps)
