"""Penalized-likelihood smoothing spline density estimation.

The log-density ``eta`` lives in the cubic smoothing spline space on the
domain rescaled to ``s in [0, 1]``, with averaging side condition
``int eta = 0`` and roughness penalty ``J(eta) = int (eta'')^2 ds``. It is
represented as

    eta(s) = d * k1(s) + sum_j c_j R1(s, xi_j)

where ``k1(s) = s - 1/2`` spans the (side-conditioned) penalty null space and
``R1`` is the reproducing kernel of the penalized part, anchored at ``q``
quantiles ``xi_j`` of the data. Then ``J(eta) = c' Q c`` with
``Q[j, k] = R1(xi_j, xi_k)``.

Two likelihoods are supported. The ordinary one treats the x as an iid
sample of f:

    L(eta) = -mean_i eta(x_i) + log int e^eta

The corrected one conditions each x_i on its truncation interval:

    L(eta) = -mean_i { eta(x_i) - log int_{u_i}^{v_i} e^eta }

and removes the sampling bias induced by double truncation. The fit
minimises ``L(eta) + lam * J(eta)`` by damped Newton, with ``lam`` chosen by
Kullback-Leibler cross-validation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import (EmptyTruncationInterval, NewtonDiverged,
                     NullSpaceUnbounded, OverflowGuard, SingularSystem,
                     TooFewDistinctPoints)
from .model import DensityEstimate, EvalGrid, TruncatedSample, gauss_legendre

ETA_MAX = 700.0
DEFAULT_ALPHA = 1.4
DEFAULT_QUAD_SIZE = 200
GRAD_TOL = 1e-7
MAX_NEWTON = 50
MAX_HALVINGS = 30
NULL_SPACE_BOUND = 1000.0


class Mode(str, enum.Enum):
    ORDINARY = "ordinary"
    CORRECTED = "corrected"


# -- cubic spline reproducing kernel on [0, 1] --------------------------------

def _k1(s):
    return s - 0.5


def _k2(s):
    k = s - 0.5
    return 0.5 * (k * k - 1.0 / 12.0)


def _k4(s):
    k = s - 0.5
    k2 = k * k
    return (k2 * k2 - 0.5 * k2 + 7.0 / 240.0) / 24.0


def cubic_rk(s, t) -> np.ndarray:
    """Reproducing kernel ``k2(s)k2(t) - k4(|s - t|)`` of the penalized
    subspace ``{f : int f = int f' = 0}`` with norm ``int (f'')^2``."""
    s = np.asarray(s, float)[:, None]
    t = np.asarray(t, float)[None, :]
    return _k2(s) * _k2(t) - _k4(np.abs(s - t))


def cubic_rk_dss(s, t) -> np.ndarray:
    """Second derivative of :func:`cubic_rk` in its first argument."""
    s = np.asarray(s, float)[:, None]
    t = np.asarray(t, float)[None, :]
    return _k2(t) - _k2(np.abs(s - t))


def default_basis_size(n: int) -> int:
    return min(n, 30 + math.ceil(10.0 * n ** (2.0 / 9.0)))


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Finite spline space, penalty matrix and shared quadrature.

    ``knots`` are the kernel anchors in data units; ``gram`` is ``Q``;
    ``nodes``/``weights`` are Gauss-Legendre on the domain (weights sum to
    the domain length).
    """

    domain: tuple
    knots: np.ndarray
    gram: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    null_dim: int = 1

    @property
    def dim(self) -> int:
        return self.null_dim + len(self.knots)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def rescale(self, x) -> np.ndarray:
        return (np.asarray(x, float) - self.domain[0]) / self.length

    def design(self, x) -> np.ndarray:
        """Basis functions ``[k1, R1(., xi_1), ..., R1(., xi_q)]`` at x."""
        s = self.rescale(np.atleast_1d(x))
        return np.column_stack([_k1(s), cubic_rk(s, self.rescale(self.knots))])

    def design_dss(self, x) -> np.ndarray:
        """Second derivatives (in rescaled units) of the basis at x."""
        s = self.rescale(np.atleast_1d(x))
        return np.column_stack([np.zeros_like(s),
                                cubic_rk_dss(s, self.rescale(self.knots))])

    @property
    def penalty(self) -> np.ndarray:
        """``J`` as a quadratic form in the full coefficient vector."""
        p = np.zeros((self.dim, self.dim))
        p[self.null_dim:, self.null_dim:] = self.gram
        return p

    def cell_bounds(self) -> np.ndarray:
        """Partition of the domain into cells of length ``weights``; cell k
        contains node k."""
        b = self.domain[0] + np.concatenate([[0.0], np.cumsum(self.weights)])
        b[-1] = self.domain[1]
        return b

    def interval_weights(self, u, v) -> np.ndarray:
        """Quadrature weights restricted to each ``[u_i, v_i]``.

        Cells wholly inside keep their weight, cells cut by an endpoint keep
        the length of the part inside. With ``[u, v]`` covering the domain
        the original weights come back unchanged.
        """
        b = self.cell_bounds()
        u = np.asarray(u, float)[:, None]
        v = np.asarray(v, float)[:, None]
        W = np.minimum(b[None, 1:], v) - np.maximum(b[None, :-1], u)
        W = np.maximum(W, 0.0)
        full = (b[None, :-1] >= u) & (b[None, 1:] <= v)
        return np.where(full, self.weights[None, :], W)


def build_basis(sample: TruncatedSample, q: Optional[int] = None,
                quad_size: int = DEFAULT_QUAD_SIZE) -> SplineBasis:
    """Anchor the cubic spline kernel at quantiles of the observed x."""
    distinct = np.unique(sample.x)
    if distinct.size < 3:
        raise TooFewDistinctPoints(
            f"need at least 3 distinct observations, got {distinct.size}")
    if q is None:
        q = default_basis_size(sample.n)
    q = int(min(max(q, 2), distinct.size))
    knots = np.unique(np.quantile(distinct, np.linspace(0.0, 1.0, q)))
    lo, hi = sample.domain
    s = (knots - lo) / (hi - lo)
    gram = cubic_rk(s, s)
    gram = 0.5 * (gram + gram.T)
    nodes, weights = gauss_legendre(lo, hi, quad_size)
    return SplineBasis((lo, hi), knots, gram, nodes, weights)


# -- likelihoods ---------------------------------------------------------------

class _Design:
    """Basis evaluated at the data and quadrature nodes, reused across
    Newton iterations."""

    def __init__(self, sample: TruncatedSample, basis: SplineBasis, mode: Mode):
        self.sample = sample
        self.basis = basis
        self.mode = Mode(mode)
        self.n = sample.n
        self.phi_x = basis.design(sample.x)
        self.phi_q = basis.design(basis.nodes)
        self.xbar = self.phi_x.mean(axis=0)
        if self.mode is Mode.CORRECTED:
            # records sharing an interval share a normaliser; with a single
            # interval the arithmetic matches ordinary mode exactly
            pairs, self.group, counts = np.unique(
                np.column_stack([sample.u, sample.v]), axis=0,
                return_inverse=True, return_counts=True)
            self.group = self.group.ravel()
            u, v = pairs[:, 0], pairs[:, 1]
            W = basis.interval_weights(u, v)
            inside = ((basis.nodes[None, :] >= u[:, None])
                      & (basis.nodes[None, :] <= v[:, None])).sum(axis=1)
            if inside.min() < 2:
                g = int(np.argmin(inside))
                i = int(np.flatnonzero(self.group == g)[0])
                raise EmptyTruncationInterval(
                    f"record {i}: interval [{u[g]}, {v[g]}] holds "
                    f"{inside[g]} quadrature node(s); need 2")
            self.W = W
            self.freq = counts / self.n
        else:
            self.W = basis.weights[None, :]
            self.group = np.zeros(self.n, dtype=int)
            self.freq = np.ones(1)

    def eta_nodes(self, theta):
        eta = self.phi_q @ theta
        top = eta.max()
        if not np.isfinite(top) or top > ETA_MAX:
            raise OverflowGuard(f"log-density reached {top:.4g} on the quadrature grid")
        return eta

    def _normalize(self, eta):
        """Log normalisers ``log sum_k W[i, k] e^eta_k`` and the matrix of
        interval probabilities ``P[i, k]``."""
        top = eta.max()
        e = np.exp(eta - top)
        z = self.W @ e
        if np.all(z > 1e-280):
            return np.log(z) + top, self.W * (e[None, :] / z[:, None])
        # some interval sits where e underflows; redo in log space
        logz = logsumexp(np.broadcast_to(eta, self.W.shape), b=self.W, axis=1)
        log_p = np.where(self.W > 0, eta[None, :] - logz[:, None], -np.inf)
        return logz, self.W * np.exp(log_p)

    def value(self, theta) -> float:
        logz, _ = self._normalize(self.eta_nodes(theta))
        return float(-self.xbar @ theta + self.freq @ logz)

    def evaluate(self, theta, scores=False):
        """Value, gradient, Hessian (and optionally per-record scores)."""
        eta = self.eta_nodes(theta)
        logz, P = self._normalize(eta)
        mu = P @ self.phi_q
        value = float(-self.xbar @ theta + self.freq @ logz)
        grad = -self.xbar + self.freq @ mu
        pbar = self.freq @ P
        hess = (self.phi_q * pbar[:, None]).T @ self.phi_q - (mu * self.freq[:, None]).T @ mu
        hess = 0.5 * (hess + hess.T)
        if not scores:
            return value, grad, hess
        return value, grad, hess, mu[self.group] - self.phi_x


def neg_log_lik_ordinary(coefficients, sample: TruncatedSample,
                         basis: SplineBasis):
    """``-mean eta(x_i) + log int e^eta`` with its gradient and Hessian."""
    return _Design(sample, basis, Mode.ORDINARY).evaluate(
        np.asarray(coefficients, float))


def neg_log_lik_corrected(coefficients, sample: TruncatedSample,
                          basis: SplineBasis):
    """``-mean {eta(x_i) - log int_{u_i}^{v_i} e^eta}`` with gradient and
    Hessian."""
    return _Design(sample, basis, Mode.CORRECTED).evaluate(
        np.asarray(coefficients, float))


# -- fitting -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SplineFit:
    basis: SplineBasis
    coefficients: np.ndarray
    lam: float
    mode: Mode
    cv_trace: tuple = ()
    newton_iters: int = 0
    converged: bool = True
    cv: float = float("nan")
    alpha: float = DEFAULT_ALPHA
    null_coefficient: float = float("nan")
    hessian: Optional[np.ndarray] = field(default=None, repr=False)

    def eta(self, x) -> np.ndarray:
        """Log-density up to the normalising constant."""
        return self.basis.design(x) @ self.coefficients

    @property
    def log_normalizer(self) -> float:
        eta = self.basis.design(self.basis.nodes) @ self.coefficients
        return float(logsumexp(eta, b=self.basis.weights))

    def density(self, x) -> np.ndarray:
        return np.exp(self.eta(x) - self.log_normalizer)

    def side_condition(self) -> float:
        """``int eta`` over the domain on the quadrature grid."""
        return float(self.basis.weights @ self.eta(self.basis.nodes))

    def quadrature_mass(self) -> float:
        return float(self.basis.weights @ self.density(self.basis.nodes))

    def roughness(self) -> float:
        c = self.coefficients[self.basis.null_dim:]
        return float(c @ self.basis.gram @ c)

    def estimate(self, grid: EvalGrid) -> DensityEstimate:
        return DensityEstimate(grid, self.density(grid.points), {
            "lambda": self.lam, "mode": self.mode.value,
            "newton_iters": self.newton_iters, "cv": self.cv})


def default_lambda_grid(n: int, size: int = 40) -> np.ndarray:
    return np.logspace(-7.0, 2.0, size) / n


def _solve_psd(A, b):
    try:
        return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), b,
                                check_finite=False)
    except linalg.LinAlgError:
        w, V = linalg.eigh(A)
        keep = w > w.max() * 1e-14
        if not keep.any():
            raise SingularSystem("penalized Hessian has no positive eigenvalue")
        return V[:, keep] @ ((V[:, keep].T @ b) / w[keep])


def _newton(design: _Design, penalty, lam, theta0, history=None):
    """Damped Newton with step halving on ``L + lam * theta' P theta``.

    Returns ``(theta, iterations, converged, hessian)``; the penalized
    objective never increases between accepted iterates.
    """
    theta = np.array(theta0, dtype=float)
    P2 = 2.0 * lam * penalty

    def objective(t):
        return design.value(t) + lam * t @ penalty @ t

    value, grad, hess = design.evaluate(theta)
    value += lam * theta @ penalty @ theta
    grad = grad + P2 @ theta
    hess = hess + P2
    if history is not None:
        history.append(value)
    for it in range(1, MAX_NEWTON + 1):
        if np.max(np.abs(grad)) < GRAD_TOL:
            return theta, it - 1, True, hess
        step = -_solve_psd(hess, grad)
        decrement = -grad @ step
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + t * step
            try:
                cand_value = objective(cand)
            except OverflowGuard:
                cand_value = np.inf
            if cand_value <= value:
                break
            t *= 0.5
        else:
            if decrement < 1e-12:
                # no representable decrease left
                return theta, it - 1, True, hess
            raise NewtonDiverged(
                f"no descent after {MAX_HALVINGS} step halvings at lam={lam:.3g}")
        theta = cand
        value, grad, hess = design.evaluate(theta)
        value += lam * theta @ penalty @ theta
        grad = grad + P2 @ theta
        hess = hess + P2
        if history is not None:
            history.append(value)
        if decrement < 1e-20:
            return theta, it, True, hess
    return theta, MAX_NEWTON, bool(np.max(np.abs(grad)) < GRAD_TOL), hess


def null_space_mle(sample: TruncatedSample, basis: SplineBasis, mode: Mode,
                   design: Optional[_Design] = None) -> float:
    """Maximum likelihood over the penalty null space (zero-mean linear eta).

    A bounded minimiser is what guarantees that the penalized problem has a
    unique solution. Returns the slope coefficient.

    Raises NullSpaceUnbounded when the likelihood keeps improving towards
    ``|slope| -> infinity``.
    """
    from scipy.optimize import brentq

    design = design or _Design(sample, basis, mode)
    e = np.zeros(basis.dim)
    e[0] = 1.0

    def deriv(d):
        return design.evaluate(d * e)[1][0]

    lo, hi = deriv(-NULL_SPACE_BOUND), deriv(NULL_SPACE_BOUND)
    if not (lo < 0.0 < hi):
        raise NullSpaceUnbounded(
            "likelihood has no minimiser among linear log-densities "
            f"(slope derivative {lo:.3g} at -{NULL_SPACE_BOUND:g}, "
            f"{hi:.3g} at +{NULL_SPACE_BOUND:g})")
    return brentq(deriv, -NULL_SPACE_BOUND, NULL_SPACE_BOUND, xtol=1e-12)


def cv_score(fit_at_lambda: SplineFit, sample: TruncatedSample,
             mode: Optional[Mode] = None, alpha: Optional[float] = None,
             design: Optional[_Design] = None) -> float:
    """Kullback-Leibler cross-validation score (smaller is better).

    ``L(eta) + alpha * tr[(H + 2 lam P)^{-1} S] / n`` where ``H`` is the
    likelihood Hessian at the fit and ``S`` the sample covariance of the
    per-record score vectors. With ``alpha = 0`` it is the in-sample minus
    log-likelihood per record.

    Raises SingularSystem if the penalized Hessian is not positive definite.
    """
    mode = Mode(mode or fit_at_lambda.mode)
    alpha = fit_at_lambda.alpha if alpha is None else alpha
    if design is None or design.mode is not mode:
        design = _Design(sample, fit_at_lambda.basis, mode)
    theta = fit_at_lambda.coefficients
    value, _, hess, scores = design.evaluate(theta, scores=True)
    if alpha == 0.0:
        return value
    A = hess + 2.0 * fit_at_lambda.lam * fit_at_lambda.basis.penalty
    S = np.cov(scores, rowvar=False, ddof=1)
    try:
        cf = linalg.cho_factor(A, check_finite=False)
    except linalg.LinAlgError:
        raise SingularSystem(
            f"penalized Hessian not invertible at lam={fit_at_lambda.lam:.3g}") from None
    correction = np.trace(linalg.cho_solve(cf, S, check_finite=False)) / design.n
    return float(value + alpha * correction)


def cv_correction(fit_at_lambda: SplineFit, sample: TruncatedSample) -> float:
    """The trace term of :func:`cv_score` alone (score at alpha=1 minus alpha=0)."""
    design = _Design(sample, fit_at_lambda.basis, fit_at_lambda.mode)
    return (cv_score(fit_at_lambda, sample, alpha=1.0, design=design)
            - cv_score(fit_at_lambda, sample, alpha=0.0, design=design))


def fit_spline(sample: TruncatedSample, mode=Mode.CORRECTED,
               lambda_grid: Optional[Sequence[float]] = None,
               lam: Optional[float] = None, alpha: float = DEFAULT_ALPHA,
               q: Optional[int] = None, quad_size: int = DEFAULT_QUAD_SIZE,
               refine: bool = True, basis: Optional[SplineBasis] = None
               ) -> SplineFit:
    """Fit the smoothing spline log-density.

    Parameters
    ----------
    sample : TruncatedSample
    mode : Mode or str
        ``"ordinary"`` ignores the truncation; ``"corrected"`` accounts for it.
    lambda_grid : sequence of float, optional
        Candidate smoothing parameters; default 40 log-spaced values in
        ``[1e-7, 1e2] / n``.
    lam : float, optional
        Fixed smoothing parameter; skips cross-validation.
    alpha : float
        Weight of the cross-validation degrees-of-freedom correction.
    q, quad_size : int
        Basis size and quadrature size, see :func:`build_basis`.
    refine : bool
        Golden-section refinement of the grid minimiser in ``log lam``.

    Raises
    ------
    NullSpaceUnbounded, NewtonDiverged, EmptyTruncationInterval
    """
    mode = Mode(mode)
    basis = basis or build_basis(sample, q=q, quad_size=quad_size)
    design = _Design(sample, basis, mode)
    penalty = basis.penalty
    d0 = null_space_mle(sample, basis, mode, design)
    theta0 = np.zeros(basis.dim)
    theta0[0] = d0

    def make(theta, lam_, iters, ok, hess, cv=float("nan"), trace=()):
        return SplineFit(basis, theta, float(lam_), mode, tuple(trace), iters,
                         ok, cv, alpha, d0, hess)

    if lam is not None:
        theta, iters, ok, hess = _newton(design, penalty, lam, theta0)
        return make(theta, lam, iters, ok, hess)

    grid = np.sort(np.asarray(
        default_lambda_grid(sample.n) if lambda_grid is None else lambda_grid,
        dtype=float))[::-1]
    fits = {}
    start = theta0

    def evaluate_at(lam_, start_):
        try:
            theta, iters, ok, hess = _newton(design, penalty, lam_, start_)
        except (NewtonDiverged, OverflowGuard, SingularSystem):
            return None, np.inf
        fit = make(theta, lam_, iters, ok, hess)
        try:
            score = cv_score(fit, sample, mode, alpha, design)
        except SingularSystem:
            score = np.inf
        return fit, score

    for lam_ in grid:
        fit, score = evaluate_at(lam_, start)
        fits[lam_] = (fit, score)
        if fit is not None:
            start = fit.coefficients

    trace = sorted((float(l), float(s)) for l, (_, s) in fits.items())
    finite = [(s, l) for l, s in trace if np.isfinite(s)]
    if not finite:
        raise NewtonDiverged("no smoothing parameter on the grid gave a usable fit")
    best_score, best_lam = min(finite)
    best_fit = fits[best_lam][0]

    if refine and len(grid) > 2:
        lams = [l for l, _ in trace]
        k = lams.index(best_lam)
        a = math.log(lams[max(k - 1, 0)])
        b = math.log(lams[min(k + 1, len(lams) - 1)])
        cache = {}

        def f(loglam):
            if loglam not in cache:
                cache[loglam] = evaluate_at(math.exp(loglam), best_fit.coefficients)
            return cache[loglam][1]

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        while b - a > 1e-2:
            if f(c) < f(d):
                b, d = d, c
                c = b - invphi * (b - a)
            else:
                a, c = c, d
                d = a + invphi * (b - a)
        for fit, score in cache.values():
            if fit is not None and score < best_score:
                best_fit, best_score = fit, score

    return replace(best_fit, cv=float(best_score), cv_trace=tuple(trace))
