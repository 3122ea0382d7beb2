"""Nonparametric MLE of the distribution function under double truncation.

The conditional likelihood of the ``x[i]`` given their truncation intervals is

    prod_i  f_i / sum_j J[i, j] f_j ,      J[i, j] = 1{u[i] <= x[j] <= v[i]}

with point masses ``f`` on the observed values. It is maximised with the
Efron-Petrosian self-consistency iteration

    F_j   = sum_m J[j, m] f_m
    f_i  <- 1 / sum_j J[j, i] / F_j ,   then renormalise,

started from uniform masses. Each step does not decrease the likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularDenominator
from .graph import Status, incidence, npmle_status
from .model import EvalGrid, TruncatedSample


@dataclass(frozen=True, eq=False)
class NpmleWeights:
    """Point masses at the observed x, one per record (ties kept separate).

    ``converged`` is False when the iteration hit ``max_iter`` or when the
    truncation graph is not strongly connected: in that case no unique
    maximiser exists and the iterates only drift towards the boundary of
    the simplex.
    """

    masses: np.ndarray
    iterations: int
    converged: bool
    log_likelihood: float
    status: Status = Status.UNIQUE_EXISTS
    history: tuple = field(default=(), repr=False)

    def to_dict(self, threshold=0.5) -> dict:
        return {
            "masses": [float(m) for m in self.masses],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "log_likelihood": float(self.log_likelihood),
            "graph_status": self.status.value,
            "degenerate": is_degenerate(self, threshold),
        }


def log_likelihood(masses, J, x=None) -> float:
    """Log of the conditional likelihood; tied x values pool their masses."""
    masses = np.asarray(masses, dtype=float)
    if x is None:
        atom = masses
    else:
        _, inverse = np.unique(x, return_inverse=True)
        atom = np.bincount(inverse, weights=masses)[inverse]
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(atom)) - np.sum(np.log(J @ masses)))


def solve_npmle(sample: TruncatedSample, tol=1e-8, max_iter=10000,
                keep_history=False) -> NpmleWeights:
    """Self-consistency solver for the truncated-data NPMLE.

    Stops when the largest change in any mass drops below ``tol``.

    Raises
    ------
    SingularDenominator
        If some ``F_j`` underflows to zero.
    """
    J = incidence(sample).astype(float)
    n = sample.n
    f = np.full(n, 1.0 / n)
    history = [log_likelihood(f, J, sample.x)] if keep_history else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        F = J @ f
        if not np.all(F > 0):
            raise SingularDenominator(
                f"interval probability underflowed at iteration {it}")
        denom = J.T @ (1.0 / F)
        if not np.all(np.isfinite(denom)):
            raise SingularDenominator(f"non-finite update at iteration {it}")
        new = 1.0 / denom
        new /= new.sum()
        step = np.max(np.abs(new - f))
        f = new
        if keep_history:
            history.append(log_likelihood(f, J, sample.x))
        if step < tol:
            converged = True
            break

    status = npmle_status(sample).status if n > 1 else Status.UNIQUE_EXISTS
    if status is not Status.UNIQUE_EXISTS:
        converged = False
    return NpmleWeights(f, it, converged, log_likelihood(f, J, sample.x),
                        status, tuple(history) if keep_history else ())


def is_degenerate(weights: NpmleWeights, threshold=0.5) -> bool:
    """True when one mass exceeds ``threshold`` or the solver did not converge."""
    return (not weights.converged) or bool(np.max(weights.masses) > threshold)


def npmle_cdf(weights: NpmleWeights, sample: TruncatedSample, grid) -> np.ndarray:
    """Step-function CDF ``F_n(t) = sum_{x_i <= t} f_i`` at each grid point."""
    t = grid.points if isinstance(grid, EvalGrid) else np.asarray(grid, float)
    order = np.argsort(sample.x, kind="stable")
    xs = sample.x[order]
    cum = np.concatenate([[0.0], np.cumsum(weights.masses[order])])
    cdf = cum[np.searchsorted(xs, t, side="right")]
    # Make the total exactly one past the last atom despite rounding.
    cdf[t >= xs[-1]] = 1.0
    return cdf
