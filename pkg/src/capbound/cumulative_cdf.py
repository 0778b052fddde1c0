"""Distribution of the cumulative capacity ``S = C_1 + ... + C_tau``.

Exact answers exist for the comonotonic case (``F(x / tau)``), for i.i.d. slots
(lattice convolution) and, in low dimension, for any copula with a density.
Without dependence information only bounds are available: the Frechet
standard bounds and the sharper dual bounds built from survival integrals.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from .copulas import BivariateCopula, DependenceSpec
from .errors import CapabilityError, DomainError, ModelError
from .marginals import Marginal

_MONO_TOL = 1e-12


@dataclass(frozen=True)
class CdfCurve:
    """A nondecreasing CDF sampled on a strictly increasing grid."""

    xs: np.ndarray = field(repr=False)
    ps: np.ndarray = field(repr=False)

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        ps = np.array(self.ps, dtype=float)
        if xs.ndim != 1 or xs.shape != ps.shape or xs.size == 0:
            raise ModelError("CdfCurve needs two 1-D arrays of equal nonzero length")
        if np.any(np.diff(xs) <= 0):
            raise ModelError("CdfCurve grid must be strictly increasing")
        if np.any(ps < -_MONO_TOL) or np.any(ps > 1 + _MONO_TOL) or np.any(np.diff(ps) < -_MONO_TOL):
            raise ModelError("CdfCurve probabilities must be nondecreasing in [0, 1]")
        ps = np.clip(np.maximum.accumulate(ps), 0.0, 1.0)
        xs.setflags(write=False)
        ps.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ps", ps)

    def __call__(self, x):
        """Linear interpolation, clamped at the ends."""
        return np.interp(x, self.xs, self.ps)

    def step_below(self, x):
        """Value at the largest grid point ``<= x`` (0 left of the grid)."""
        idx = np.searchsorted(self.xs, x, side="right") - 1
        return np.where(idx < 0, 0.0, self.ps[np.maximum(idx, 0)])

    def step_above(self, x):
        """Value at the smallest grid point ``>= x`` (1 right of the grid)."""
        idx = np.searchsorted(self.xs, x, side="left")
        return np.where(idx >= self.xs.size, 1.0, self.ps[np.minimum(idx, self.xs.size - 1)])

    def mean(self) -> float:
        """Mean of the distribution the curve describes, as a step function."""
        mass = np.diff(np.concatenate([[0.0], self.ps]))
        return float(np.dot(mass, self.xs) + (1.0 - self.ps[-1]) * self.xs[-1])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "p"])
            for x, p in zip(self.xs, self.ps):
                w.writerow([f"{x:.17g}", f"{p:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "CdfCurve":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls([float(r[0]) for r in rows], [float(r[1]) for r in rows])


BOUND_METHODS = ("standard", "standard-equal-split", "dual")


@dataclass(frozen=True)
class BoundPair:
    lower: CdfCurve
    upper: CdfCurve
    method: str
    tau: int
    exact: CdfCurve | None = None

    def __post_init__(self):
        if self.method not in BOUND_METHODS:
            raise ModelError(f"unknown bound method {self.method!r}")
        if self.tau < 1:
            raise ModelError("tau must be >= 1")
        if not np.array_equal(self.lower.xs, self.upper.xs):
            raise ModelError("lower and upper curves must share a grid")
        if np.any(self.lower.ps > self.upper.ps + 1e-9):
            raise ModelError("lower bound exceeds upper bound")

    @property
    def xs(self) -> np.ndarray:
        return self.lower.xs

    def to_csv(self, path) -> None:
        """Columns ``x, lower, upper, exact_if_available, method, tau``."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "lower", "upper", "exact_if_available", "method", "tau"])
            exact = self.exact(self.xs) if self.exact is not None else None
            for k, x in enumerate(self.xs):
                e = "" if exact is None else f"{exact[k]:.17g}"
                w.writerow([f"{x:.17g}", f"{self.lower.ps[k]:.17g}", f"{self.upper.ps[k]:.17g}", e, self.method, self.tau])

    @classmethod
    def from_csv(cls, path) -> "BoundPair":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        xs = [float(r[0]) for r in rows]
        exact = None
        if rows and all(r[3] for r in rows):
            exact = CdfCurve(xs, [float(r[3]) for r in rows])
        return cls(
            CdfCurve(xs, [float(r[1]) for r in rows]),
            CdfCurve(xs, [float(r[2]) for r in rows]),
            rows[0][4],
            int(rows[0][5]),
            exact,
        )


# -- exact distributions ----------------------------------------------------
def _check_tau(tau):
    if int(tau) != tau or tau < 1:
        raise DomainError(f"tau must be an integer >= 1, got {tau}")
    return int(tau)


def exact_cdf_comonotonic(m: Marginal, tau: int, x):
    """``P(S <= x) = F(x / tau)`` when all slots move together."""
    tau = _check_tau(tau)
    return m.cdf(np.asarray(x, dtype=float) / tau) if np.ndim(x) else float(m.cdf(float(x) / tau))


def _pair_for(spec: DependenceSpec) -> BivariateCopula:
    kind = spec.effective_kind
    if kind == "comonotonic":
        raise CapabilityError("the comonotonic copula has no density; use exact_cdf_comonotonic")
    if kind == "independent":
        return BivariateCopula("independence")
    if not isinstance(spec.bivariate, BivariateCopula) or not spec.bivariate.has_density:
        raise CapabilityError("copula-measure integration needs a closed-form pair copula density")
    return spec.bivariate


def _copula_integral_point(c, marginals, z):
    lo = [m.support_min for m in marginals]
    if z < sum(lo):
        return 0.0
    d = len(marginals)
    opts = dict(epsabs=1e-10, epsrel=1e-8, limit=200)
    if d == 1:
        return float(marginals[0].cdf(z))
    m1, m2 = marginals[0], marginals[1]
    top1 = float(m1.cdf(z - sum(lo[1:])))
    if d == 2:
        # F(z) = int_0^{F1(z)} D1C(u, F2(z - q1(u))) du: the tau_z boundary in u2.
        def inner(u):
            return float(c.d1(u, m2.cdf(z - m1.quantile(u))))

        return float(integrate.quad(inner, 0.0, top1, **opts)[0])
    m3 = marginals[2]

    def over_u2(u1):
        rest = z - float(m1.quantile(u1))
        top2 = float(m2.cdf(rest - lo[2]))
        if top2 <= 0:
            return 0.0

        def g(u2):
            return float(c.density(u1, u2) * c.d1(u2, m3.cdf(rest - m2.quantile(u2))))

        return integrate.quad(g, 0.0, top2, **opts)[0]

    return float(integrate.quad(over_u2, 0.0, top1, **opts)[0])


def exact_cdf_copula_integral(spec: DependenceSpec, marginals, z):
    """``mu_C(B_z)``: mass of the copula measure under the boundary ``tau_z``.

    ``B_z = {u : sum_i F_i^{-1}(u_i) <= z}``.  The last coordinate is integrated
    in closed form through the conditional CDF, the remaining ones by adaptive
    quadrature.  Markov specs use the chain's consecutive-pair copula.
    """
    marginals = list(marginals)
    if not 1 <= len(marginals) <= 3:
        raise CapabilityError("copula-measure integration supports dimension 1 to 3")
    c = _pair_for(spec)
    if np.ndim(z) == 0:
        z = float(z)
        return 1.0 if math.isinf(z) and z > 0 else _copula_integral_point(c, marginals, z)
    return np.array([_copula_integral_point(c, marginals, float(v)) for v in np.ravel(z)]).reshape(np.shape(z))


def _lattice_pmf(m: Marginal, h: float, n: int) -> np.ndarray:
    """Mass of ``m`` rounded to the nearest lattice point ``k h``."""
    edges = (np.arange(n + 1) + 0.5) * h
    cdf = np.asarray(m.cdf(edges))
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    pmf[-1] += 1.0 - cdf[-1]
    return pmf


def cdf_iid_convolution(m: Marginal, tau: int, grid_n: int = 4096) -> CdfCurve:
    """``tau``-fold convolution of ``m`` on a lattice, evaluated by FFT.

    ``grid_n`` lattice steps cover the marginal up to its ``1 - 1e-12``
    quantile.  The rounded sum lives on the same lattice, so the CDF is read
    at half-lattice points where the rounding is unbiased.
    """
    tau = _check_tau(tau)
    if m.support_min < 0:
        raise DomainError("lattice convolution needs a nonnegative marginal")
    x_max = m.upper_point(1e-12)
    h = x_max / grid_n
    pmf = _lattice_pmf(m, h, grid_n)
    size = tau * grid_n + 1
    nfft = 1 << (size - 1).bit_length()
    spec = np.fft.rfft(pmf, nfft) ** tau
    dist = np.fft.irfft(spec, nfft)[:size]
    dist = np.clip(dist, 0.0, None)
    cdf = np.minimum(np.cumsum(dist), 1.0)
    xs = (np.arange(size) + 0.5) * h
    return CdfCurve(xs, np.maximum.accumulate(cdf))


def cdf_iid_clt(m: Marginal, tau: int, x):
    """Normal approximation ``Phi((x - tau mu) / (sqrt(tau) sigma))``."""
    tau = _check_tau(tau)
    mu, var = m.moments()
    if var == 0:
        return np.where(np.asarray(x) >= tau * mu, 1.0, 0.0)
    out = special.ndtr((np.asarray(x, dtype=float) - tau * mu) / math.sqrt(tau * var))
    return out[()] if np.ndim(out) == 0 else out


_CHERNOFF_GRID = np.logspace(-3.0, math.log10(50.0), 200)


def _chernoff_point(m, tau, x, sign):
    def expo(theta):
        return -sign * theta * x + tau * m.cgf(sign * theta)

    vals = np.array([expo(t) for t in _CHERNOFF_GRID])
    k = int(np.argmin(vals))
    best = vals[k]
    lo = _CHERNOFF_GRID[max(k - 1, 0)]
    hi = _CHERNOFF_GRID[min(k + 1, _CHERNOFF_GRID.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(expo, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return min(1.0, math.exp(best)) if best < 0 else 1.0


def tail_iid_chernoff(m: Marginal, tau: int, x, lower: bool = False):
    """Chernoff bound on ``P(S >= x)`` (or on ``P(S <= x)`` with ``lower=True``).

    ``P(S >= x) <= inf_theta exp(-theta x + tau kappa(theta))`` over
    ``theta > 0``; the lower tail uses ``exp(theta x + tau kappa(-theta))``.
    The infimum is taken on a log grid over ``[1e-3, 50]`` and polished by a
    bounded scalar search; values are clamped to 1.
    """
    tau = _check_tau(tau)
    sign = -1.0 if lower else 1.0
    if np.ndim(x) == 0:
        return _chernoff_point(m, tau, float(x), sign)
    return np.array([_chernoff_point(m, tau, float(v), sign) for v in np.ravel(x)]).reshape(np.shape(x))


# -- standard bounds --------------------------------------------------------------
@dataclass(frozen=True)
class StandardBounds:
    """Frechet standard bounds on ``P(sum X_i <= s)`` at one point."""

    lower: float
    upper: float
    u_lower: np.ndarray = field(repr=False)
    u_upper: np.ndarray = field(repr=False)
    equal_split: tuple[float, float] = (0.0, 1.0)
    converged: bool = True
    restarts: int = 0


def _pair_step(Fi, Fj, lo_i, lo_j, total, maximize):
    """Best split of ``total`` between coordinates ``i`` and ``j``.

    A 65-point scan followed by three nested rescans of the bracketing cell,
    which resolves the optimum to about ``1e-7`` of the feasible width.
    """
    a, b = lo_i - 1e-9, total - lo_j + 1e-9
    if b <= a:
        return None
    best_x, best_v = None, None
    for _ in range(4):
        xs = np.linspace(a, b, 65)
        vals = Fi(xs) + Fj(total - xs)
        k = int(np.argmax(vals) if maximize else np.argmin(vals))
        if best_v is None or (vals[k] > best_v if maximize else vals[k] < best_v):
            best_x, best_v = float(xs[k]), float(vals[k])
        a, b = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    return best_x


def _coordinate_descent(cdfs, lows, u, maximize, sweeps=50):
    u = np.array(u, dtype=float)
    d = u.size

    def value(v):
        return float(sum(F(x) for F, x in zip(cdfs, v)))

    best = value(u)
    for _ in range(sweeps):
        before = best
        for i in range(d):
            for j in range(i + 1, d):
                x = _pair_step(cdfs[i], cdfs[j], lows[i], lows[j], u[i] + u[j], maximize)
                if x is None:
                    continue
                trial = u.copy()
                trial[j] = u[i] + u[j] - x
                trial[i] = x
                tv = value(trial)
                if (tv > best) if maximize else (tv < best):
                    u, best = trial, tv
        if abs(best - before) <= 1e-14:
            return u, best, True
    return u, best, False


def _cdf_funcs(marginals):
    return [lambda x, m=m: np.asarray(m.cdf(x)) for m in marginals]


def standard_bounds(marginals, s: float, restarts: int = 20, seed: int = 0) -> StandardBounds:
    """Optimised Frechet standard bounds on ``P(sum X_i <= s)``.

    The objective ``sum F_i(u_i)`` over ``sum u_i = s`` is maximised (lower
    bound) and minimised (upper bound) by pairwise coordinate descent started
    from the equal split and from ``restarts`` random splits.
    """
    marginals = list(marginals)
    d = len(marginals)
    if d == 0:
        raise DomainError("standard_bounds needs at least one marginal")
    s = float(s)
    if d == 1:
        v = float(marginals[0].cdf(s))
        return StandardBounds(v, v, np.array([s]), np.array([s]), (v, v))
    cdfs = _cdf_funcs(marginals)
    lows = np.array([m.support_min for m in marginals])
    eq = np.full(d, s / d)
    eq_val = float(sum(F(x) for F, x in zip(cdfs, eq)))
    eq_pair = (max(eq_val - (d - 1), 0.0), min(eq_val, 1.0))
    starts = [eq]
    rng = np.random.default_rng(seed)
    free = s - lows.sum()
    for _ in range(restarts):
        w = rng.dirichlet(np.ones(d))
        starts.append(lows + max(free, 0.0) * w if free > 0 else eq + (w - 1.0 / d))
    best_hi, u_hi, best_lo, u_lo = -np.inf, eq, np.inf, eq
    converged = True
    for st in starts:
        u, v, ok = _coordinate_descent(cdfs, lows, st, maximize=True)
        converged &= ok
        if v > best_hi:
            best_hi, u_hi = v, u
        u, v, ok = _coordinate_descent(cdfs, lows, st, maximize=False)
        converged &= ok
        if v < best_lo:
            best_lo, u_lo = v, u
    lower = max(max(best_hi, eq_val) - (d - 1), 0.0)
    upper = min(min(best_lo, eq_val), 1.0)
    return StandardBounds(lower, upper, u_hi, u_lo, eq_pair, converged, restarts)


def standard_bounds_equal_split(m: Marginal, tau: int, s):
    """Standard bounds evaluated at the equal split ``u_i = s / tau``.

    Returns ``(max(1 - tau Fbar(s/tau), 0), min(tau F(s/tau), 1))``.
    """
    tau = _check_tau(tau)
    x = np.asarray(s, dtype=float) / tau
    lower = np.maximum(1.0 - tau * np.asarray(m.sf(x)), 0.0)
    upper = np.minimum(tau * np.asarray(m.cdf(x)), 1.0)
    if np.ndim(s) == 0:
        return float(lower), float(upper)
    return lower, upper


def _max_plus(g, f, maximize):
    """``out[k] = best_j g[k - j] + f[j]`` on a common lattice."""
    n = g.size + f.size - 1
    out = np.full(n, -np.inf if maximize else np.inf)
    for j, fj in enumerate(f):
        seg = g + fj
        cur = out[j : j + g.size]
        out[j : j + g.size] = np.maximum(cur, seg) if maximize else np.minimum(cur, seg)
    return out


def standard_bounds_curve(marginals, xs, lattice_n: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Standard bounds on a whole grid via max-plus / min-plus lattice convolution.

    Lattice points are feasible splits, so the returned lower curve never
    exceeds the true supremum bound and the upper curve never falls below the
    true infimum bound: both stay valid, and are combined with the equal split.
    """
    marginals = list(marginals)
    xs = np.asarray(xs, dtype=float)
    d = len(marginals)
    if d == 1:
        v = np.asarray(marginals[0].cdf(xs), dtype=float)
        return v, v.copy()
    lo = min(m.support_min for m in marginals)
    hi = max(xs.max(), lo + 1e-9) - (d - 1) * lo
    h = (hi - lo) / lattice_n
    # One point below the support so that F(u-) = 0 splits are available.
    grid = lo + h * np.arange(-1, lattice_n + 1)
    tables = [np.asarray(m.cdf(grid), dtype=float) for m in marginals]
    gmax, gmin = tables[0], tables[0]
    for t in tables[1:]:
        gmax = _max_plus(gmax, t, True)
        gmin = _max_plus(gmin, t, False)
    sums = d * (lo - h) + h * np.arange(gmax.size)
    run_max = np.maximum.accumulate(gmax)
    run_min = np.minimum.accumulate(gmin[::-1])[::-1]
    k_lo = np.searchsorted(sums, xs + 1e-12, side="right") - 1
    k_hi = np.searchsorted(sums, xs - 1e-12, side="left")
    sup_val = np.where(k_lo >= 0, run_max[np.clip(k_lo, 0, None)], 0.0)
    inf_val = np.where(k_hi < sums.size, run_min[np.clip(k_hi, None, sums.size - 1)], float(d))
    eq = np.sum([np.asarray(m.cdf(xs / d)) for m in marginals], axis=0)
    lower = np.maximum(np.maximum(sup_val, eq) - (d - 1), 0.0)
    upper = np.minimum(np.minimum(inf_val, eq), 1.0)
    return lower, np.maximum(upper, lower)


def standard_bound_pair(m: Marginal, tau: int, xs, equal_split: bool = False, with_exact=None) -> BoundPair:
    tau = _check_tau(tau)
    xs = np.asarray(xs, dtype=float)
    if equal_split:
        lo, up = standard_bounds_equal_split(m, tau, xs)
        method = "standard-equal-split"
    else:
        lo, up = standard_bounds_curve([m] * tau, xs)
        method = "standard"
    return BoundPair(CdfCurve(xs, lo), CdfCurve(xs, up), method, tau, with_exact)


# -- dual bounds ---------------------------------------------------------------------
def dual_objective(m: Marginal, n: int, s: float, u: float) -> float:
    """``n int_u^{s-(n-1)u} Fbar / (s - n u)`` for ``u != s/n``."""
    b = s - (n - 1) * u
    r = s - n * u
    if r == 0:
        return float(n * m.sf(s / n))
    area = m.survival_integral(u, b) if u <= b else -m.survival_integral(b, u)
    return n * area / r


def _scan_offsets(m, n, s, sign, span):
    """Minimise (sign=+1) or maximise (sign=-1) the dual objective in ``u``.

    ``u = s/n - sign * delta`` over log-spaced ``delta`` then a bounded polish.
    """
    base = s / n
    obj = lambda delta: sign * dual_objective(m, n, s, base - sign * delta)
    if span <= 0:
        return base, sign * float(n * m.sf(base))
    deltas = np.logspace(math.log10(min(1e-7, span / 2)), math.log10(span), 240)
    vals = np.array([obj(dl) for dl in deltas])
    k = int(np.argmin(vals))
    lo = deltas[max(k - 1, 0)]
    hi = deltas[min(k + 1, deltas.size - 1)]
    best_d, best_v = deltas[k], vals[k]
    if hi > lo:
        res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.fun < best_v:
            best_d, best_v = float(res.x), float(res.fun)
    limit = sign * float(n * m.sf(base))
    if limit <= best_v:
        return base, sign * limit
    return base - sign * best_d, sign * best_v


@dataclass(frozen=True)
class DualBound:
    """A dual tail bound together with the point ``u`` that attains it."""

    value: float
    u: float
    raw: float
    limit: float


def _u_min(m: Marginal) -> float:
    q = float(m.quantile(1e-9))
    return q if m.kind == "rayleigh" else m.support_min


def dual_upper(m: Marginal, n: int, s: float) -> DualBound:
    if n < 2:
        raise DomainError("dual bounds need n >= 2")
    s = float(s)
    limit = float(n * m.sf(s / n))
    if s <= 0:
        return DualBound(1.0, s / n, limit, limit)
    span = s / n - _u_min(m)
    u, raw = _scan_offsets(m, n, s, 1.0, span)
    return DualBound(min(raw, 1.0), u, raw, limit)


def dual_lower(m: Marginal, n: int, s: float) -> DualBound:
    if n < 2:
        raise DomainError("dual bounds need n >= 2")
    s = float(s)
    limit = float(n * m.sf(s / n) - n + 1)
    span = 2.0 * max(m.upper_point(1e-12), abs(s)) + 1.0
    u, raw = _scan_offsets(m, n, s, -1.0, span)
    raw = raw - n + 1
    return DualBound(max(raw, 0.0), u, raw, limit)


def dual_upper_bound_homogeneous(m: Marginal, n: int, s: float) -> float:
    """``D(s)``, an upper bound on ``P(X_1 + ... + X_n >= s)`` over all dependence."""
    return dual_upper(m, n, s).value


def dual_lower_bound_homogeneous(m: Marginal, n: int, s: float) -> float:
    """``d(s)``, a lower bound on ``P(X_1 + ... + X_n > s)`` over all dependence."""
    return dual_lower(m, n, s).value


def dual_limit_check(m: Marginal, n: int, s: float, delta: float = 1e-5) -> tuple[float, float]:
    """Numerical ``u -> s/n`` limit of the dual objective vs ``n Fbar(s/n)``.

    Richardson extrapolation of the objective at ``s/n - delta`` and
    ``s/n - delta/2`` removes the linear term.
    """
    base = s / n
    g1 = dual_objective(m, n, s, base - delta)
    g2 = dual_objective(m, n, s, base - delta / 2)
    return 2.0 * g2 - g1, float(n * m.sf(base))


def dual_bound_pair(m: Marginal, tau: int, xs) -> BoundPair:
    """CDF bounds ``1 - D(s) <= P(S <= s) <= 1 - d(s)``."""
    tau = _check_tau(tau)
    xs = np.asarray(xs, dtype=float)
    if tau == 1:
        v = np.asarray(m.cdf(xs), dtype=float)
        return BoundPair(CdfCurve(xs, v), CdfCurve(xs, v), "dual", 1)
    lo = np.array([1.0 - dual_upper_bound_homogeneous(m, tau, x) for x in xs])
    up = np.array([1.0 - dual_lower_bound_homogeneous(m, tau, x) for x in xs])
    lo = np.maximum.accumulate(np.clip(lo, 0, 1))
    up = np.minimum.accumulate(np.clip(up, 0, 1)[::-1])[::-1]
    return BoundPair(CdfCurve(xs, lo), CdfCurve(xs, np.maximum(up, lo)), "dual", tau)


def _het_objective(marginals, s, u, r):
    total = 0.0
    for m, ui in zip(marginals, u):
        total += m.survival_integral(ui, ui + r) if r > 0 else -m.survival_integral(ui + r, ui)
    return total / r


@dataclass(frozen=True)
class HeterogeneousDual:
    upper: float
    lower: float
    u_upper: np.ndarray = field(repr=False)
    u_lower: np.ndarray = field(repr=False)
    starts: int = 10


def dual_bounds_heterogeneous(marginals, s: float, starts: int = 10, seed: int = 0) -> HeterogeneousDual:
    """``(D(s), d(s))`` for distinct marginals by Nelder-Mead over ``u``.

    The search runs in ``(u_1, ..., u_{n-1}, log|r|)`` with
    ``r = s - sum u``, which keeps every iterate on the correct side of the
    hyperplane.  Random starts are spread around the equal split; one extra
    start sits exactly on the diagonal ``u_i = u``.
    """
    marginals = list(marginals)
    n = len(marginals)
    if n > 4:
        raise CapabilityError("heterogeneous dual bounds support at most 4 marginals")
    if n < 2:
        raise DomainError("dual bounds need n >= 2")
    s = float(s)
    rng = np.random.default_rng(seed)
    scale = max(abs(s) / n, max(m.mean for m in marginals), 1e-3)

    def unpack(x, sign):
        r = sign * math.exp(x[-1])
        head = x[:-1]
        last = s - r - head.sum()
        return np.concatenate([head, [last]]), r

    def solve(sign):
        def f(x):
            if x[-1] > 50:
                return np.inf
            u, r = unpack(x, sign)
            return sign * _het_objective(marginals, s, u, r)

        best_x, best_v = None, np.inf
        init = [np.concatenate([np.full(n - 1, s / n - 0.1 * scale / n * sign), [math.log(0.1 * scale)]])]
        for _ in range(starts):
            r0 = scale * rng.uniform(0.02, 1.5)
            head = s / n - sign * r0 / n + rng.normal(0, 0.3 * scale, n - 1)
            init.append(np.concatenate([head, [math.log(r0)]]))
        for x0 in init:
            res = optimize.minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
            if res.fun < best_v:
                best_v, best_x = float(res.fun), res.x
        u, _ = unpack(best_x, sign)
        return sign * best_v, u

    up, u_up = solve(1.0)
    lo, u_lo = solve(-1.0)
    return HeterogeneousDual(min(up, 1.0), max(lo - n + 1, 0.0), u_up, u_lo, starts)


# -- sharpness ----------------------------------------------------------------------------
@dataclass(frozen=True)
class SharpnessReport:
    n: int
    s: float
    D: float
    a: float
    b: float
    a_star: float
    interior: bool
    first_order_residual: float
    second_order: float
    ordering_ok: bool
    ordering_worst: float
    mixability: str
    verdict: str


def sharpness_check(m: Marginal, n: int, s: float) -> SharpnessReport:
    """Numerical check of the attainment, first/second-order and ordering conditions."""
    bound = dual_upper(m, n, s)
    a = bound.u
    b = s - (n - 1) * a
    D = bound.value
    interior = a < s / n and bound.raw < bound.limit
    a_star = float(m.quantile(max(min(1.0 - D, 1.0 - 1e-16), 0.0)))
    if interior:
        resid = bound.raw - float(m.sf(a) + (n - 1) * m.sf(b))
    else:
        resid = float("nan")
    second = float(m.pdf(a) - (n - 1) ** 2 * m.pdf(b))
    ys = np.linspace(b, b + max(4.0, 2.0 * abs(b)), 50)
    lhs = (n - 1) * (np.asarray(m.cdf(ys)) - float(m.cdf(b)))
    rhs = float(m.cdf(a)) - np.asarray(m.cdf((s - ys) / (n - 1)))
    worst = float(np.max(lhs - rhs))
    ordering_ok = worst <= 1e-12
    attained = interior and a_star <= a + 1e-12
    if attained and abs(resid) <= 1e-6 and second >= 0 and ordering_ok:
        verdict = "conditions hold"
    elif (interior and second < 0) or not ordering_ok:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return SharpnessReport(n, float(s), D, a, b, a_star, interior, resid, second, ordering_ok, worst, "not checked", verdict)
