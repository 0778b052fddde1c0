"""Seeded Monte Carlo for cumulative capacity and its window extremes."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .copulas import DependenceSpec, sample_paths
from .csvio import write_table
from .cumulative_cdf import BoundPair, CdfCurve
from .errors import DomainError
from .extremes import FIELDS, batch_extremes
from .marginals import Marginal

MIN_SAMPLES = 1000
GRID_POINTS = 200
BATCH = 50_000


@dataclass(frozen=True)
class ChannelScenario:
    marginal: Marginal
    dependence: DependenceSpec
    t: int
    reference_rate: float | None = None
    label: str = ""

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise DomainError(f"horizon t must be an integer >= 1, got {self.t}")
        if self.reference_rate is not None and not self.reference_rate > 0:
            raise DomainError("reference_rate must be > 0")
        if not self.label:
            object.__setattr__(self, "label", f"{self.dependence.label} t={self.t}")


@dataclass(frozen=True, eq=False)
class SimResult:
    """Empirical CDFs of every path statistic plus the raw per-path values.

    ``curves[name]`` is ``P(stat <= x)`` on a quantile-spaced grid of the sample
    and ``stderr[name]`` its binomial standard error. With a reference rate the
    statistics of the net path ``c_i - rate`` appear with a ``net_`` prefix.
    """

    scenario: ChannelScenario = field(repr=False)
    n_samples: int
    seed: int
    curves: dict = field(repr=False)
    stderr: dict = field(repr=False)
    samples: dict = field(repr=False)

    @property
    def S(self) -> CdfCurve:
        return self.curves["S_total"]

    def prob_le(self, name: str, x) -> np.ndarray:
        vals = np.sort(self.samples[name])
        return np.searchsorted(vals, x, side="right") / self.n_samples

    def prob_ge(self, name: str, x) -> np.ndarray:
        vals = np.sort(self.samples[name])
        return 1.0 - np.searchsorted(vals, x, side="left") / self.n_samples

    def equals(self, other: "SimResult") -> bool:
        """Bitwise equality of every stored array."""
        if (self.n_samples, self.seed) != (other.n_samples, other.seed) or self.curves.keys() != other.curves.keys():
            return False
        for k in self.curves:
            a, b = self.curves[k], other.curves[k]
            if not (np.array_equal(a.xs, b.xs) and np.array_equal(a.ps, b.ps)):
                return False
            if not np.array_equal(self.stderr[k], other.stderr[k]):
                return False
            if not np.array_equal(self.samples[k], other.samples[k]):
                return False
        return True

    def to_csv(self, path, names=None) -> None:
        """Rows ``x, p_hat, stderr, statistic_name``."""
        names = list(self.curves) if names is None else list(names)
        rows = []
        for name in names:
            c = self.curves[name]
            rows.extend((x, p, s, name) for x, p, s in zip(c.xs, c.ps, self.stderr[name]))
        write_table(path, ["x", "p_hat", "stderr", "statistic_name"], rows)


def binomial_stderr(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.sqrt(p * (1.0 - p) / n)


def empirical_curve(values, grid_points: int = GRID_POINTS) -> tuple[CdfCurve, np.ndarray]:
    """Empirical CDF on quantile-spaced points of the sample itself."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    probs = (np.arange(grid_points) + 0.5) / grid_points
    xs = np.unique(np.quantile(v, probs))
    ps = np.searchsorted(v, xs, side="right") / n
    return CdfCurve(xs, ps), binomial_stderr(ps, n)


def _batch(scn: ChannelScenario, seed: int, index: int, size: int) -> dict:
    rng = np.random.default_rng([seed, index])
    paths = sample_paths(scn.dependence, scn.marginal, scn.t, size, rng)
    out = batch_extremes(paths)
    if scn.reference_rate is not None:
        net = batch_extremes(paths - scn.reference_rate)
        out.update({f"net_{k}": v for k, v in net.items()})
    return out


def run(scn: ChannelScenario, n_samples: int, seed: int, workers: int = 1, grid_points: int = GRID_POINTS) -> SimResult:
    """Draw ``n_samples`` paths in batches seeded by ``(seed, batch_index)``.

    Batches are concatenated in index order, so the result does not depend on
    ``workers``.
    """
    if int(n_samples) != n_samples or n_samples < MIN_SAMPLES:
        raise DomainError(f"n_samples must be an integer >= {MIN_SAMPLES}")
    n_samples, seed = int(n_samples), int(seed)
    sizes = [BATCH] * (n_samples // BATCH)
    if n_samples % BATCH:
        sizes.append(n_samples % BATCH)
    jobs = [(scn, seed, k, s) for k, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _batch(*a), jobs))
    else:
        parts = [_batch(*a) for a in jobs]
    samples = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    curves, errs = {}, {}
    for k, v in samples.items():
        curves[k], errs[k] = empirical_curve(v, grid_points)
    return SimResult(scn, n_samples, seed, curves, errs, samples)


@dataclass(frozen=True)
class Violation:
    x: float
    p_hat: float
    lower: float
    upper: float
    stderr: float


@dataclass(frozen=True)
class VerificationReport:
    statistic: str
    n_points: int
    sigmas: float
    violations: list

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_csv(self, path) -> None:
        rows = [(v.x, v.p_hat, v.lower, v.upper, v.stderr) for v in self.violations]
        write_table(path, ["x", "p_hat", "lower", "upper", "stderr"], rows)


def verify_bounds(
    sim: SimResult,
    bounds,
    statistic: str = "S_total",
    sigmas: float = 3.0,
    atol: float = 1e-9,
) -> VerificationReport:
    """Check ``lower - k sigma <= p_hat <= upper + k sigma`` at every empirical grid point.

    ``bounds`` is a :class:`BoundPair` or a ``(lower, upper)`` pair of curves.
    Off-grid bound values are read conservatively: the lower curve at the
    nearest grid point to the left, the upper one to the right. ``atol``
    absorbs rounding where a bound equals 0 or 1 and the standard error vanishes.
    """
    lower, upper = (bounds.lower, bounds.upper) if isinstance(bounds, BoundPair) else bounds
    emp = sim.curves[statistic]
    err = sim.stderr[statistic]
    lo = lower.step_below(emp.xs)
    up = upper.step_above(emp.xs)
    bad = (emp.ps < lo - sigmas * err - atol) | (emp.ps > up + sigmas * err + atol)
    violations = [
        Violation(float(emp.xs[k]), float(emp.ps[k]), float(lo[k]), float(up[k]), float(err[k]))
        for k in np.flatnonzero(bad)
    ]
    return VerificationReport(statistic, emp.xs.size, sigmas, violations)


def ks_distance(empirical: CdfCurve, reference) -> float:
    """Sup-norm distance between two step CDFs on the union of their grids.

    ``reference`` may also be a callable CDF, evaluated at the empirical grid.
    """
    if callable(reference) and not isinstance(reference, CdfCurve):
        return float(np.max(np.abs(empirical.ps - np.asarray(reference(empirical.xs), dtype=float))))
    lo = max(empirical.xs[0], reference.xs[0])
    hi = min(empirical.xs[-1], reference.xs[-1])
    if lo > hi:
        raise DomainError("curves have disjoint supports")
    grid = np.union1d(empirical.xs, reference.xs)
    grid = grid[(grid >= lo) & (grid <= hi)]
    return float(np.max(np.abs(empirical.step_below(grid) - reference.step_below(grid))))


__all__ = [
    "ChannelScenario",
    "SimResult",
    "FIELDS",
    "run",
    "empirical_curve",
    "verify_bounds",
    "VerificationReport",
    "Violation",
    "ks_distance",
    "binomial_stderr",
]
