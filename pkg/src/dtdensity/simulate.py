"""Monte Carlo study of the estimators under four truncation scenarios.

Target laws of X and left truncation limits U (V = U + tau):

    S1  X ~ Unif(0, 1),       U ~ Unif(-1/3, 1)           (no sampling bias)
    S2  X ~ Unif(0, 1),       sqrt(3/4 (U + 1/3)) ~ Unif(0, 1)
    S3  X ~ Beta(3/2, 5),     U as in S2
    S4  X ~ Normal(1/2, sd 1/10), U ~ Beta(20, 20)

with tau = 1/3 (constant) or tau ~ Unif(1/3 - 1/20, 1/3 + 1/20) (random).
Samples are drawn by rejection: a proposal is kept only when U <= X <= V.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import AcceptanceStall, DTDensityError, ValidationError
from .estimators import METHODS, MethodSpec
from .model import (DensityEstimate, EvalGrid, TruncatedSample, check_same_grid,
                    trapezoid_integral)

SCENARIOS = ("S1", "S2", "S3", "S4")
TAU = 1.0 / 3.0
TAU_NOISE = 1.0 / 20.0
MAX_STALL = 10 ** 6
S4_MEAN, S4_SD = 0.5, 0.1


class TauMode(str, enum.Enum):
    CONSTANT = "constant"
    RANDOM = "random"


@dataclass(frozen=True)
class Scenario:
    id: str
    tau_mode: TauMode = TauMode.CONSTANT
    n: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.id not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.id!r}")
        object.__setattr__(self, "tau_mode", TauMode(self.tau_mode))
        if self.n < 1:
            raise ValidationError("scenario needs n >= 1")

    @property
    def label(self) -> str:
        return f"{self.id}-{self.tau_mode.value}-n{self.n}"

    def rng(self, trial=None) -> np.random.Generator:
        key = [self.seed, SCENARIOS.index(self.id),
               list(TauMode).index(self.tau_mode), self.n]
        if trial is not None:
            key.append(trial)
        return np.random.default_rng(key)


def draw_proposals(scenario_id, tau_mode, size, rng):
    """Independent draws of (U, V, X) before the truncation filter."""
    if scenario_id in ("S1",):
        u = rng.uniform(-1.0 / 3.0, 1.0, size)
    elif scenario_id in ("S2", "S3"):
        w = rng.uniform(0.0, 1.0, size)
        u = (4.0 / 3.0) * w * w - 1.0 / 3.0
    else:
        u = rng.beta(20.0, 20.0, size)

    if TauMode(tau_mode) is TauMode.CONSTANT:
        tau = np.full(size, TAU)
    else:
        tau = rng.uniform(TAU - TAU_NOISE, TAU + TAU_NOISE, size)

    if scenario_id in ("S1", "S2"):
        x = rng.uniform(0.0, 1.0, size)
    elif scenario_id == "S3":
        x = rng.beta(1.5, 5.0, size)
    else:
        x = rng.normal(S4_MEAN, S4_SD, size)
    return u, u + tau, x


def accepted(u, v, x) -> np.ndarray:
    # S4 normals are confined to the unit domain along with the truncation.
    return (u <= x) & (x <= v) & (x >= 0.0) & (x <= 1.0)


def sample_scenario(scenario: Scenario, rng=None, batch=4096) -> TruncatedSample:
    """Rejection-sample ``scenario.n`` observable records on domain [0, 1].

    Raises AcceptanceStall after a million consecutive rejections.
    """
    rng = rng or scenario.rng()
    keep_u, keep_v, keep_x = [], [], []
    have = 0
    stall = 0
    while have < scenario.n:
        u, v, x = draw_proposals(scenario.id, scenario.tau_mode, batch, rng)
        ok = accepted(u, v, x)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            stall += batch
            if stall >= MAX_STALL:
                raise AcceptanceStall(
                    f"{scenario.label}: {stall} consecutive rejections")
            continue
        stall = batch - 1 - idx[-1]
        idx = idx[: scenario.n - have]
        keep_u.append(u[idx])
        keep_v.append(v[idx])
        keep_x.append(x[idx])
        have += idx.size
    return TruncatedSample(np.concatenate(keep_u), np.concatenate(keep_v),
                           np.concatenate(keep_x), (0.0, 1.0))


def true_density(scenario_id, grid: EvalGrid) -> DensityEstimate:
    """Density of X on the grid (S4 renormalised to [0, 1])."""
    t = grid.points
    if scenario_id in ("S1", "S2"):
        values = np.ones_like(t)
    elif scenario_id == "S3":
        values = stats.beta.pdf(t, 1.5, 5.0)
    elif scenario_id == "S4":
        mass = (stats.norm.cdf(1.0, S4_MEAN, S4_SD)
                - stats.norm.cdf(0.0, S4_MEAN, S4_SD))
        values = stats.norm.pdf(t, S4_MEAN, S4_SD) / mass
    else:
        raise ValidationError(f"unknown scenario {scenario_id!r}")
    return DensityEstimate(grid, values, {"scenario": scenario_id})


def ise(estimate: DensityEstimate, truth: DensityEstimate) -> float:
    """Integrated squared error by the trapezoid rule on the shared grid."""
    check_same_grid(estimate, truth)
    return trapezoid_integral((estimate.values - truth.values) ** 2, truth.grid)


# -- study ---------------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    scenario: str
    trial: int
    method: str
    ise: float
    failed: bool
    error: str = ""


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    method: str
    mise: float
    sdise: float
    mdise: float
    iqrise: float
    trials: int
    failures: int
    errors: int


@dataclass(frozen=True)
class StudyReport:
    rows: tuple
    log: tuple = field(repr=False)
    elapsed: float = field(default=0.0, compare=False)

    def row(self, scenario, method) -> SummaryRow:
        for r in self.rows:
            if r.method == method and r.scenario in (scenario, getattr(scenario, "label", None)):
                return r
        raise KeyError((scenario, method))

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows]}

    def to_markdown(self) -> str:
        lines = ["| scenario | method | MISE | SDISE | MDISE | IQRISE | trials | failures |",
                 "|---|---|---|---|---|---|---|---|"]
        for r in self.rows:
            lines.append(
                f"| {r.scenario} | {r.method} | {r.mise:.4f} | {r.sdise:.4f} | "
                f"{r.mdise:.4f} | {r.iqrise:.4f} | {r.trials} | {r.failures} |")
        return "\n".join(lines) + "\n"


def summarize(log, trials=None) -> tuple:
    """Aggregate per-trial records into summary rows.

    Mean/SD and median/IQR are taken over every trial whose estimator
    returned values (degenerate ones included); trials that raised are
    excluded from both and only counted.
    """
    groups = {}
    for rec in log:
        groups.setdefault((rec.scenario, rec.method), []).append(rec)
    rows = []
    for (scen, method), recs in groups.items():
        vals = np.array([r.ise for r in recs if not r.error], dtype=float)
        if vals.size:
            mise = float(vals.mean())
            sdise = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            mdise, iqrise = float(med), float(q3 - q1)
        else:
            mise = sdise = mdise = iqrise = float("nan")
        rows.append(SummaryRow(scen, method, mise, sdise, mdise, iqrise,
                               trials if trials is not None else len(recs),
                               sum(r.failed for r in recs),
                               sum(bool(r.error) for r in recs)))
    return tuple(rows)


def _run_trial(args):
    scenario, trial, specs, grid_count = args
    sample = sample_scenario(scenario, scenario.rng(trial))
    grid = EvalGrid(0.0, 1.0, grid_count)
    truth = true_density(scenario.id, grid)
    out = []
    for spec in specs:
        try:
            est = spec.run(sample, grid)
        except DTDensityError as exc:
            out.append(TrialRecord(scenario.label, trial, spec.method,
                                   float("nan"), True, type(exc).__name__))
            continue
        out.append(TrialRecord(scenario.label, trial, spec.method,
                               ise(est, truth), bool(est.info.get("degenerate"))))
    return out


def default_workers() -> int:
    return os.cpu_count() or 1


def run_study(scenarios, methods=METHODS, M=250, workers=1,
              grid_count=101) -> StudyReport:
    """Run ``M`` trials of every scenario and score each method by ISE.

    Per-trial random streams are keyed by (seed, scenario, trial index), so
    the report does not depend on ``workers``.
    """
    if M < 1:
        raise ValidationError("need at least one trial")
    specs = [m if isinstance(m, MethodSpec) else MethodSpec(m) for m in methods]
    tasks = [(s, t, specs, grid_count) for s in scenarios for t in range(M)]
    start = time.perf_counter()
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, tasks, chunksize=1))
    else:
        results = [_run_trial(t) for t in tasks]
    log = tuple(rec for batch in results for rec in batch)
    return StudyReport(summarize(log, M), log, time.perf_counter() - start)


def write_study(report: StudyReport, out_dir) -> dict:
    """Persist the per-trial log (CSV) and the summary (JSON + markdown)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trials": out / "trials.csv", "summary": out / "summary.json",
             "table": out / "summary.md"}
    with open(paths["trials"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "trial", "method", "ise", "failed", "error"])
        for r in report.log:
            w.writerow([r.scenario, r.trial, r.method, repr(r.ise),
                        int(r.failed), r.error])
    with open(paths["summary"], "w") as fh:
        json.dump(_json_safe(report.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["table"].write_text(report.to_markdown())
    return {k: str(v) for k, v in paths.items()}


def read_trials(path) -> tuple:
    with open(path, newline="") as fh:
        return tuple(TrialRecord(row["scenario"], int(row["trial"]), row["method"],
                                 float(row["ise"]), bool(int(row["failed"])),
                                 row["error"])
                     for row in csv.DictReader(fh))


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj
