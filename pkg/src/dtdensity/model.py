"""Core data types: doubly truncated samples, evaluation grids, estimates.

A doubly truncated record is a triplet ``(u, v, x)`` where ``x`` was only
observable because it fell inside ``[u, v]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (EmptySample, GridMismatch, LengthMismatch,
                     NonFiniteValue, ObservabilityViolation, ValidationError)

DEFAULT_GRID_SIZE = 101
DOMAIN_PADDING = 0.05


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TruncatedSample:
    """Validated doubly truncated records plus the working domain.

    Use :func:`validate_sample` to build one; the constructor trusts its input.
    """

    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    domain: tuple

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "v", _frozen(self.v))
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "domain", (float(self.domain[0]),
                                            float(self.domain[1])))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def tau(self) -> np.ndarray:
        """Truncation interval lengths ``v - u``."""
        return self.v - self.u

    @property
    def records(self) -> list:
        return [(float(a), float(b), float(c))
                for a, b, c in zip(self.u, self.v, self.x)]

    def subset(self, index) -> "TruncatedSample":
        """Records selected by ``index`` (e.g. a bootstrap draw), same domain."""
        index = np.asarray(index)
        return TruncatedSample(self.u[index], self.v[index], self.x[index],
                               self.domain)

    def scaled(self, scale=1.0, shift=0.0) -> "TruncatedSample":
        """Affine image ``scale * t + shift`` of every coordinate and the domain."""
        lo, hi = self.domain
        return TruncatedSample(scale * self.u + shift, scale * self.v + shift,
                               scale * self.x + shift,
                               (scale * lo + shift, scale * hi + shift))

    def __eq__(self, other):
        if not isinstance(other, TruncatedSample):
            return NotImplemented
        return (self.domain == other.domain
                and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v)
                and np.array_equal(self.x, other.x))

    def __hash__(self):
        return hash((self.domain, self.u.tobytes(), self.v.tobytes(),
                     self.x.tobytes()))

    def __len__(self):
        return self.n


def default_domain(x) -> tuple:
    """Observed x-range padded by 5% on each side."""
    lo, hi = float(np.min(x)), float(np.max(x))
    pad = DOMAIN_PADDING * (hi - lo)
    if pad == 0.0:
        pad = max(abs(lo), 1.0) * DOMAIN_PADDING
    return lo - pad, hi + pad


def validate_sample(raw, domain: Optional[Sequence[float]] = None
                    ) -> TruncatedSample:
    """Check raw ``(u, v, x)`` triplets and wrap them in a TruncatedSample.

    Parameters
    ----------
    raw : iterable of (u, v, x) or TruncatedSample
        Records. A TruncatedSample is re-validated (and returned unchanged
        when ``domain`` is None).
    domain : (lo, hi), optional
        Working support. Defaults to the observed x-range padded by 5% of
        its length on each side.

    Raises
    ------
    EmptySample, NonFiniteValue, ObservabilityViolation, ValidationError
    """
    if isinstance(raw, TruncatedSample):
        if domain is None:
            domain = raw.domain
        raw = raw.records
    arr = np.asarray(list(raw), dtype=float)
    if arr.size == 0:
        raise EmptySample("sample has no records")
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError("records must be (u, v, x) triplets")
    bad = ~np.isfinite(arr).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonFiniteValue(f"record {i} has a non-finite value: {arr[i]}")
    u, v, x = arr.T
    bad = (x < u) | (x > v)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ObservabilityViolation(i, arr[i])

    if domain is None:
        domain = default_domain(x)
    lo, hi = map(float, domain)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise NonFiniteValue("domain limits must be finite")
    if not lo < hi:
        raise ValidationError(f"empty domain [{lo}, {hi}]")
    if x.min() < lo or x.max() > hi:
        raise ValidationError(
            f"observations span [{x.min()}, {x.max()}], outside domain "
            f"[{lo}, {hi}]")
    return TruncatedSample(u, v, x, (lo, hi))


def read_csv(path, domain=None) -> TruncatedSample:
    """Read a ``u,v,x`` CSV file into a validated sample.

    Errors name the offending line (header is line 1).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise EmptySample(f"{path}: empty file") from None
        if header != ["u", "v", "x"]:
            raise ValidationError(
                f"{path}: line 1: expected header 'u,v,x', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(
                    f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                rec = tuple(float(c) for c in row)
            except ValueError:
                raise ValidationError(
                    f"{path}: line {lineno}: not a number in {row!r}") from None
            if not np.isfinite(rec).all():
                raise NonFiniteValue(f"{path}: line {lineno}: non-finite value")
            u, v, x = rec
            if not u <= x <= v:
                err = ObservabilityViolation(len(rows), rec)
                err.args = (f"{path}: line {lineno}: {err.args[0]}",)
                raise err
            rows.append(rec)
    if not rows:
        raise EmptySample(f"{path}: no records")
    return validate_sample(rows, domain)


def write_csv(sample: TruncatedSample, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "x"])
        for rec in sample.records:
            w.writerow([repr(c) for c in rec])


@dataclass(frozen=True)
class EvalGrid:
    """Equally spaced evaluation points from ``lo`` to ``hi`` inclusive."""

    lo: float
    hi: float
    count: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if not self.count >= 2:
            raise ValidationError("grid needs at least 2 points")
        if not self.lo < self.hi:
            raise ValidationError(f"empty grid range [{self.lo}, {self.hi}]")

    @classmethod
    def for_sample(cls, sample: TruncatedSample, count=DEFAULT_GRID_SIZE):
        return cls(sample.domain[0], sample.domain[1], count)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def __len__(self):
        return self.count


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: EvalGrid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.count,):
            raise LengthMismatch(
                f"{values.size} values for a grid of {self.grid.count} points")
        object.__setattr__(self, "values", values)

    @property
    def integral(self) -> float:
        return trapezoid_integral(self.values, self.grid)


def trapezoid_integral(values, grid: EvalGrid) -> float:
    """Composite trapezoid rule of ``values`` sampled on ``grid``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.count,):
        raise LengthMismatch(
            f"{values.size} values for a grid of {grid.count} points")
    return float(grid.step * (values.sum() - 0.5 * (values[0] + values[-1])))


def check_same_grid(a: DensityEstimate, b: DensityEstimate):
    if a.grid != b.grid:
        raise GridMismatch(f"{a.grid} != {b.grid}")


def gauss_legendre(lo, hi, size):
    """Gauss-Legendre nodes and weights mapped to ``[lo, hi]``."""
    t, w = np.polynomial.legendre.leggauss(size)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w
