import itertools

import numpy as np
import pytest

from dtdensity.model import validate_sample

# Seven-record example whose truncation graph is connected but not strongly
# connected: nothing but x7 lies inside [u7, v7].
TABLE1 = [
    (0.4, 2.0, 0.75),
    (0.3, 1.4, 1.05),
    (0.8, 1.8, 1.25),
    (0.0, 2.3, 1.5),
    (1.3, 2.6, 2.25),
    (1.1, 3.0, 2.4),
    (2.45, 3.4, 2.5),
]

ACCEPTANCE_LINES = []


@pytest.fixture
def table1():
    return validate_sample(TABLE1)


@pytest.fixture
def table1_widened():
    rows = list(TABLE1)
    rows[6] = (1.4, 3.4, 2.5)
    return validate_sample(rows)


def random_truncated(rng, n, domain=(0.0, 1.0), max_width=0.6):
    """Random records with x inside its interval, all inside ``domain``."""
    lo, hi = domain
    x = rng.uniform(lo, hi, n)
    width = rng.uniform(0.05, max_width, n) * (hi - lo)
    u = np.maximum(x - rng.uniform(0, 1, n) * width, lo - 0.1)
    v = np.minimum(u + width, hi + 0.1)
    v = np.maximum(v, x)
    return validate_sample(np.column_stack([u, v, x]), domain)


def reachability(J):
    """All-pairs reachability by repeated boolean squaring (oracle)."""
    R = J.astype(bool) | np.eye(len(J), dtype=bool)
    while True:
        nxt = R | ((R.astype(int) @ R.astype(int)) > 0)
        if (nxt == R).all():
            return R
        R = nxt


def npmle_loglik(f, J):
    F = f @ J.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sum(np.log(f), axis=-1) - np.sum(np.log(F), axis=-1)


def simplex_lattice(n, denom):
    """All points of the simplex with coordinates in (1/denom) Z, all > 0."""
    pts = []
    for cut in itertools.combinations(range(1, denom), n - 1):
        edges = (0,) + cut + (denom,)
        pts.append(np.diff(edges))
    return np.array(pts, dtype=float) / denom


def brute_force_npmle(J, coarse=None, final_step=1e-4):
    """Maximise the truncated-data likelihood over the simplex by exhaustive
    lattice search followed by successively finer local lattices."""
    n = len(J)
    if coarse is None:
        coarse = {1: 1, 2: 400, 3: 200, 4: 60, 5: 36, 6: 26}.get(n, 20)
    if n == 1:
        return np.ones(1)
    pts = simplex_lattice(n, coarse)
    best = pts[np.argmax(npmle_loglik(pts, J))]
    step = 1.0 / coarse
    offsets = np.array(list(itertools.product(range(-3, 4), repeat=n - 1)),
                       dtype=float)
    while step > final_step:
        step /= 3.0
        head = best[:-1] + offsets * step
        tail = 1.0 - head.sum(axis=1, keepdims=True)
        cand = np.hstack([head, tail])
        cand = cand[(cand > 0).all(axis=1)]
        best = cand[np.argmax(npmle_loglik(cand, J))]
    return best


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
