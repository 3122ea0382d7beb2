import math

import numpy as np
import pytest
from scipy import stats

from dtdensity.errors import AcceptanceStall, GridMismatch, ValidationError
from dtdensity.model import DensityEstimate, EvalGrid
from dtdensity.simulate import (Scenario, TauMode, accepted, draw_proposals,
                                ise, read_trials, run_study, sample_scenario,
                                summarize, true_density, write_study)


def acceptance_by_bin(scenario_id, n, bins, seed=0):
    u, v, x = draw_proposals(scenario_id, TauMode.CONSTANT, n,
                             np.random.default_rng(seed))
    ok = accepted(u, v, x)
    which = np.minimum((x * bins).astype(int), bins - 1)
    tried = np.bincount(which, minlength=bins)
    kept = np.bincount(which, weights=ok, minlength=bins)
    return ok.mean(), kept / tried


def test_s1_has_flat_acceptance():
    rate, per_bin = acceptance_by_bin("S1", 100_000, 10)
    assert abs(rate - 0.25) < 0.01
    assert per_bin.max() / per_bin.min() < 1.1


def test_s2_accepted_x_follows_the_biased_law():
    s = sample_scenario(Scenario("S2", n=100_000, seed=3))
    edges = np.linspace(0, 1, 21)
    observed = np.histogram(s.x, edges)[0]
    antideriv = (2 / 3) * ((edges + 1 / 3) ** 1.5 - edges ** 1.5)
    probs = np.diff(antideriv) / (antideriv[-1] - antideriv[0])
    chi2 = stats.chisquare(observed, probs * s.n)
    assert chi2.pvalue > 1e-3


def test_s2_law_is_not_uniform():
    # sanity check that the chi-square test above has power
    s = sample_scenario(Scenario("S2", n=100_000, seed=3))
    observed = np.histogram(s.x, np.linspace(0, 1, 21))[0]
    assert stats.chisquare(observed).pvalue < 1e-10


@pytest.mark.parametrize("sid", ["S1", "S2", "S3", "S4"])
@pytest.mark.parametrize("tau", list(TauMode))
def test_samples_are_observable_and_deterministic(sid, tau):
    sc = Scenario(sid, tau, n=150, seed=42)
    a, b = sample_scenario(sc), sample_scenario(sc)
    assert a == b
    assert a.n == 150 and a.domain == (0.0, 1.0)
    assert np.all((a.u <= a.x) & (a.x <= a.v))
    assert np.all((a.x >= 0) & (a.x <= 1))
    width = a.v - a.u
    if tau is TauMode.CONSTANT:
        np.testing.assert_allclose(width, 1 / 3, atol=1e-12)
    else:
        assert width.min() >= 1 / 3 - 1 / 20 - 1e-12
        assert width.max() <= 1 / 3 + 1 / 20 + 1e-12


def test_seeds_and_trials_give_different_samples():
    sc = Scenario("S1", n=50, seed=1)
    assert sample_scenario(sc) != sample_scenario(Scenario("S1", n=50, seed=2))
    assert sample_scenario(sc, sc.rng(0)) != sample_scenario(sc, sc.rng(1))


def test_acceptance_stall(monkeypatch):
    import dtdensity.simulate as sim
    monkeypatch.setattr(sim, "accepted", lambda u, v, x: np.zeros(u.shape, bool))
    with pytest.raises(AcceptanceStall):
        sample_scenario(Scenario("S1", n=1))


def test_bad_scenarios():
    with pytest.raises(ValidationError):
        Scenario("S9")
    with pytest.raises(ValidationError):
        Scenario("S1", n=0)
    with pytest.raises(ValueError):
        Scenario("S1", "sometimes")


def test_true_densities():
    grid = EvalGrid(0, 1, 101)
    np.testing.assert_array_equal(true_density("S1", grid).values, 1.0)
    np.testing.assert_array_equal(true_density("S2", grid).values, 1.0)
    s3 = true_density("S3", grid).values
    assert s3[0] == 0.0
    np.testing.assert_allclose(s3, stats.beta.pdf(grid.points, 1.5, 5), rtol=1e-12)
    s4 = true_density("S4", grid)
    raw = 10 / math.sqrt(2 * math.pi)
    mass = stats.norm.cdf(5) - stats.norm.cdf(-5)
    assert s4.values[50] == pytest.approx(raw / mass, rel=1e-12)
    assert s4.values[50] == pytest.approx(raw, rel=1e-6)
    for sid in ("S1", "S2", "S3", "S4"):
        # Beta(3/2, 5) has a square-root cusp at 0, costing the trapezoid rule ~3e-3
        assert true_density(sid, grid).integral == pytest.approx(1.0, abs=5e-3)


def test_ise_examples():
    grid = EvalGrid(0, 1, 101)
    one = DensityEstimate(grid, np.ones(101))
    assert ise(one, one) == 0.0
    assert ise(one, DensityEstimate(grid, np.zeros(101))) == pytest.approx(1.0)
    assert ise(one, DensityEstimate(grid, 2 * grid.points)) == pytest.approx(1 / 3, abs=1e-3)
    with pytest.raises(GridMismatch):
        ise(one, DensityEstimate(EvalGrid(0, 1, 51), np.ones(51)))


@pytest.fixture(scope="module")
def small_study():
    scen = [Scenario("S2", n=60, seed=7), Scenario("S4", TauMode.RANDOM, n=60, seed=7)]
    return scen, run_study(scen, ["spline-ord", "kde"], M=3, workers=1)


def test_study_shape(small_study):
    scen, report = small_study
    assert len(report.rows) == 4
    assert len(report.log) == 2 * 3 * 2
    for sc in scen:
        for m in ("spline-ord", "kde"):
            row = report.row(sc, m)
            assert row.trials == 3
            assert row.mise >= 0 or math.isnan(row.mise)


def test_study_is_independent_of_workers(small_study):
    scen, report = small_study
    again = run_study(scen, ["spline-ord", "kde"], M=3, workers=2)
    # repr compares NaN fields too
    assert repr(again.rows) == repr(report.rows)
    assert repr(again.log) == repr(report.log)


def test_persisted_log_recomputes_summary(small_study, tmp_path):
    _, report = small_study
    paths = write_study(report, tmp_path)
    log = read_trials(paths["trials"])
    assert len(log) == len(report.log)
    for a, b in zip(log, report.log):
        assert (a.scenario, a.trial, a.method, a.failed, a.error) == \
               (b.scenario, b.trial, b.method, b.failed, b.error)
        assert a.ise == b.ise or (math.isnan(a.ise) and math.isnan(b.ise))
    rows = summarize(log, 3)
    for a, b in zip(rows, report.rows):
        for fa, fb in zip(a.__dict__.values(), b.__dict__.values()):
            assert fa == fb or (isinstance(fa, float) and math.isnan(fa) and math.isnan(fb))
    assert (tmp_path / "summary.md").read_text().startswith("| scenario")


def test_single_trial_has_zero_sd():
    report = run_study([Scenario("S1", n=80, seed=1)], ["spline-ord"], M=1)
    row = report.rows[0]
    assert row.sdise == 0.0 and row.iqrise == 0.0
    assert row.mise == row.mdise


def test_summary_policy():
    from dtdensity.simulate import TrialRecord
    log = [TrialRecord("A", 0, "kde", 0.1, False),
           TrialRecord("A", 1, "kde", 5.0, True),  # degenerate but returned
           TrialRecord("A", 2, "kde", float("nan"), True, "DegenerateWeights")]
    (row,) = summarize(log, 3)
    assert row.mise == pytest.approx(2.55)
    assert row.mdise == pytest.approx(2.55)
    assert row.failures == 2 and row.errors == 1 and row.trials == 3


def test_zero_trials_rejected():
    with pytest.raises(ValidationError):
        run_study([Scenario("S1")], ["kde"], M=0)
