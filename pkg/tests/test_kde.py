import math

import numpy as np
import pytest
from scipy import stats

from dtdensity.errors import DegenerateWeights, ZeroVariance
from dtdensity.kde import (Bandwidth, BandwidthMethod, dpi1_bandwidth,
                           extended_grid, kde_estimate, standard_kde)
from dtdensity.model import EvalGrid, trapezoid_integral, validate_sample
from dtdensity.npmle import NpmleWeights, solve_npmle
from dtdensity.simulate import Scenario, sample_scenario

from conftest import random_truncated


def weights(masses, converged=True):
    return NpmleWeights(np.asarray(masses, float), 1, converged, 0.0)


def test_single_point_is_a_normal_density():
    s = validate_sample([(0, 1, 0.3)], (0, 1))
    grid = EvalGrid(0, 1, 51)
    est = kde_estimate(s, weights([1.0]), 0.07, grid)
    np.testing.assert_allclose(est.values, stats.norm.pdf(grid.points, 0.3, 0.07),
                               rtol=1e-12)


def test_uniform_weights_give_the_standard_estimator():
    s = random_truncated(np.random.default_rng(0), 25)
    grid = EvalGrid(0, 1, 101)
    w = weights(np.full(25, 1 / 25))
    a = kde_estimate(s, w, 0.05, grid).values
    b = standard_kde(s.x, 0.05, grid).values
    assert np.array_equal(a, b)


def test_two_point_closed_form():
    s = validate_sample([(0, 1, 0.2), (0, 1, 0.8)], (0, 1))
    grid = EvalGrid(0.0, 1.0, 3)  # 0, 0.5, 1
    est = kde_estimate(s, weights([0.7, 0.3]), 0.1, grid)
    phi = math.exp(-0.5 * 3.0 ** 2) / (0.1 * math.sqrt(2 * math.pi))
    assert est.values[1] == pytest.approx(0.7 * phi + 0.3 * phi, rel=1e-12)


def test_unconverged_weights_raise(table1):
    w = solve_npmle(table1)
    with pytest.raises(DegenerateWeights):
        kde_estimate(table1, w, 0.2, EvalGrid.for_sample(table1))


def binned_dpi1(x, bins=401):
    """Textbook one-stage plug-in on linearly binned data (independent route)."""
    n = x.size
    sd = np.std(x, ddof=1)
    psi6 = -15 / (16 * math.sqrt(math.pi)) * sd ** -7
    g = (-6 / (math.sqrt(2 * math.pi) * psi6 * n)) ** (1 / 7)
    lo, hi = x.min(), x.max()
    delta = (hi - lo) / (bins - 1)
    pos = (x - lo) / delta
    left = np.floor(pos).astype(int).clip(0, bins - 2)
    frac = pos - left
    counts = np.bincount(left, 1 - frac, bins) + np.bincount(left + 1, frac, bins)
    lags = np.arange(-(bins - 1), bins) * delta / g
    d4 = stats.norm.pdf(lags) * (lags ** 4 - 6 * lags ** 2 + 3) / g ** 5
    psi4 = counts @ np.convolve(counts, d4, mode="valid") / n ** 2
    return (1 / (2 * math.sqrt(math.pi)) / (psi4 * n)) ** 0.2


def test_dpi1_matches_textbook_rule_for_uniform_weights():
    x = np.random.default_rng(5).standard_normal(10_000)
    s = validate_sample([(-10, 10, xi) for xi in x], (-10, 10))
    h = dpi1_bandwidth(s, weights(np.full(x.size, 1 / x.size)))
    assert h.method is BandwidthMethod.DPI1
    ref = binned_dpi1(x)
    assert abs(h.h / ref - 1) < 0.15


def test_dpi1_zero_variance():
    s = validate_sample([(0, 1, 0.5)] * 4, (0, 1))
    with pytest.raises(ZeroVariance):
        dpi1_bandwidth(s, weights(np.full(4, 0.25)))


@pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
def test_dpi1_scale_equivariance(c):
    s = sample_scenario(Scenario("S2", n=150, seed=2))
    w = solve_npmle(s)
    ws = solve_npmle(s.scaled(c))
    np.testing.assert_allclose(ws.masses, w.masses, atol=1e-12)
    assert dpi1_bandwidth(s.scaled(c), ws).h == pytest.approx(
        c * dpi1_bandwidth(s, w).h, rel=1e-9)


@pytest.mark.parametrize("scenario", ["S1", "S2", "S3", "S4"])
def test_mass_accounting_on_extended_grid(scenario):
    for seed in range(9, 40):
        s = sample_scenario(Scenario(scenario, n=200, seed=seed))
        w = solve_npmle(s)
        if w.converged:
            break
    assert w.converged
    h = dpi1_bandwidth(s, w)
    grid = extended_grid(s, h)
    est = kde_estimate(s, w, h, grid)
    assert abs(trapezoid_integral(est.values, grid) - 1) < 1e-4


def test_location_equivariance():
    s = sample_scenario(Scenario("S1", n=120, seed=4))
    c = 2.5
    w = solve_npmle(s)
    ws = solve_npmle(s.scaled(1.0, c))
    h = dpi1_bandwidth(s, w)
    hs = dpi1_bandwidth(s.scaled(1.0, c), ws)
    assert hs.h == pytest.approx(h.h, rel=1e-9)
    g = EvalGrid(0, 1, 101)
    gs = EvalGrid(c, 1 + c, 101)
    np.testing.assert_allclose(kde_estimate(s.scaled(1.0, c), ws, hs, gs).values,
                               kde_estimate(s, w, h, g).values, rtol=1e-8)


def test_bandwidth_validation():
    with pytest.raises(ValueError):
        Bandwidth(0.0)
    with pytest.raises(ValueError):
        Bandwidth(float("nan"))
