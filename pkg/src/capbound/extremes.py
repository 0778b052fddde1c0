"""Maximum, minimum and range of cumulative capacity.

For a path ``c_1..c_t`` with window sums ``S(j, k) = c_{j+1} + ... + c_k``:

* forward statistics fix the left end (``S(0, k)``, ``k >= 1``),
* backward statistics fix the right end (``S(j, t)``, ``j < t``),
* general statistics range over every nonempty window.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .copulas import DependenceSpec, copula_cdf, joint_orthant_prob, joint_survival_prob, survival_copula
from .csvio import write_columns
from .errors import DomainError, NoRootError
from .marginals import Marginal

FIELDS = ("S_total", "fwd_max", "bwd_max", "gen_max", "fwd_min", "bwd_min", "gen_min", "range_gen", "range_fwd")


@dataclass(frozen=True)
class PathExtremes:
    S_total: float
    fwd_max: float
    bwd_max: float
    gen_max: float
    fwd_min: float
    bwd_min: float
    gen_min: float
    range_gen: float
    range_fwd: float

    def as_dict(self) -> dict:
        return asdict(self)


def path_extremes(path) -> PathExtremes:
    """All window statistics of one path in a single pass."""
    c = np.asarray(path, dtype=float).ravel()
    if c.size == 0:
        raise DomainError("path must be nonempty")
    total = 0.0
    fwd_max = fwd_min = None
    # Kadane: best window ending here, for max and min.
    run_max = run_min = None
    gen_max = gen_min = None
    for x in c:
        x = float(x)
        total += x
        fwd_max = total if fwd_max is None else max(fwd_max, total)
        fwd_min = total if fwd_min is None else min(fwd_min, total)
        run_max = x if run_max is None else max(x, run_max + x)
        run_min = x if run_min is None else min(x, run_min + x)
        gen_max = run_max if gen_max is None else max(gen_max, run_max)
        gen_min = run_min if gen_min is None else min(gen_min, run_min)
    suffix = np.cumsum(c[::-1])
    bwd_max = float(suffix.max())
    bwd_min = float(suffix.min())
    return PathExtremes(total, fwd_max, bwd_max, gen_max, fwd_min, bwd_min, gen_min, gen_max - gen_min, fwd_max - fwd_min)


def batch_extremes(paths) -> dict:
    """Vectorised :func:`path_extremes` over the rows of an ``(n, t)`` array."""
    c = np.atleast_2d(np.asarray(paths, dtype=float))
    if c.shape[1] == 0:
        raise DomainError("paths must be nonempty")
    prefix = np.cumsum(c, axis=1)
    zero_prefix = np.concatenate([np.zeros((c.shape[0], 1)), prefix[:, :-1]], axis=1)
    total = prefix[:, -1]
    gen_max = np.max(prefix - np.minimum.accumulate(zero_prefix, axis=1), axis=1)
    gen_min = np.min(prefix - np.maximum.accumulate(zero_prefix, axis=1), axis=1)
    suffix = total[:, None] - zero_prefix
    out = {
        "S_total": total,
        "fwd_max": prefix.max(axis=1),
        "bwd_max": suffix.max(axis=1),
        "gen_max": gen_max,
        "fwd_min": prefix.min(axis=1),
        "bwd_min": suffix.min(axis=1),
        "gen_min": gen_min,
    }
    out["range_gen"] = gen_max - gen_min
    out["range_fwd"] = out["fwd_max"] - out["fwd_min"]
    return out


def _check(t, x):
    if int(t) != t or t < 1:
        raise DomainError("horizon t must be an integer >= 1")
    return int(t), float(x)


def max_cdf_lower_bound_nongranger(spec: DependenceSpec, m: Marginal, t: int, x: float, **kw) -> float:
    """Lower bound on ``P(S(0,1) <= x, ..., S(0,t) <= x)``.

    ``C(F(x), F(x/2, x/2), ..., F(x/t, ..., x/t))``: the window ``k`` holds when
    every slot among the first ``k`` is at most ``x/k``, and the time copula of
    ``spec`` couples the windows.
    """
    t, x = _check(t, x)
    levels = [joint_orthant_prob(spec, m, [x / k] * k, **kw) for k in range(1, t + 1)]
    if t == 1:
        return float(levels[0])
    return float(copula_cdf(spec, levels))


def min_cdf_upper_bound_nongranger(spec: DependenceSpec, m: Marginal, t: int, x: float, **kw) -> float:
    """Upper bound on ``P(min_k S(0,k) <= x)`` through survival orthants.

    ``1 - Cbar(Fbar(x), Fbar(x/2, x/2), ..., Fbar(x/t, ..., x/t))``.
    """
    t, x = _check(t, x)
    levels = [joint_survival_prob(spec, m, [x / k] * k, **kw) for k in range(1, t + 1)]
    if t == 1:
        return float(1.0 - levels[0])
    return float(1.0 - survival_copula(spec, levels))


def lundberg_exponent_iid(m: Marginal, rate: float) -> float:
    """Positive root of ``log E exp(theta (C - rate)) = 0``."""
    mean = m.mean
    if not rate > mean:
        raise NoRootError(f"reference rate {rate} must exceed the mean capacity {mean:.6g}")

    def kap(theta):
        return m.cgf(theta) - theta * rate

    hi = 0.05
    while kap(hi) <= 0:
        hi *= 2.0
        if hi > 1e4:
            raise NoRootError("kappa does not cross zero")
    lo = hi / 2.0 if hi > 0.05 else 1e-9
    return float(optimize.bisect(kap, lo, hi, xtol=1e-13, maxiter=500))


def iid_sup_tail_lundberg(m: Marginal, rate: float, x) -> float:
    """``P(sup_t sum_{i<=t} (C_i - rate) >= x) <= exp(-theta* x)``."""
    theta = lundberg_exponent_iid(m, rate)
    out = np.exp(-theta * np.maximum(np.asarray(x, dtype=float), 0.0))
    return float(out) if np.ndim(out) == 0 else out


def export_bound_curve(path, xs, **curves) -> None:
    write_columns(path, {"x": list(map(float, xs)), **{k: list(map(float, v)) for k, v in curves.items()}})


def nongranger_curves(spec: DependenceSpec, m: Marginal, t: int, xs) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([max_cdf_lower_bound_nongranger(spec, m, t, x) for x in xs])
    up = np.array([min_cdf_upper_bound_nongranger(spec, m, t, x) for x in xs])
    return lo, up


def geometric_ratio(m: Marginal, rate: float) -> float:
    """Factor by which the sup-tail bound shrinks per unit of ``x``."""
    return math.exp(-lundberg_exponent_iid(m, rate))
