"""Dependence structures for capacity time series.

A :class:`DependenceSpec` is one of

* ``comonotonic`` -- every slot is the same increasing function of one uniform,
* ``independent`` -- i.i.d. slots,
* ``markov`` -- a strictly stationary first-order Markov chain whose
  consecutive-pair copula is a :class:`BivariateCopula`.

For the Markov kind the joint law of ``(U_1, ..., U_k)`` is the chain built by
the star-product of the pair copula with itself; orthant and rectangle
probabilities are obtained by backward recursion over Gauss-Legendre nodes,
with the last step done exactly through the conditional CDF ``D1C``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from .errors import CapabilityError, DomainError, ModelError, NumericError
from .marginals import Marginal

FAMILIES = ("gaussian", "clayton", "fgm", "independence", "comonotonic")

_ONE_MINUS = 1.0 - 2.0**-53
MAX_QUADRATURE_DIM = 8

_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(16)
# Panels graded geometrically toward both ends, where tail-dependent densities
# (Clayton near 0, Gaussian near both corners) pile up.
_PANEL_EDGES = np.array([0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999, 0.99999, 1.0])


def _gl_graded(a, b):
    edges = a + (b - a) * _PANEL_EDGES
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (_PANEL_X + 1.0)).ravel(), (half * _PANEL_W).ravel()


def _bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF via Owen's T function."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    h, k = np.broadcast_arrays(h, k)
    out = np.empty(h.shape)
    lo_inf = np.isneginf(h) | np.isneginf(k)
    out[lo_inf] = 0.0
    h_inf = np.isposinf(h) & ~lo_inf
    out[h_inf] = special.ndtr(k[h_inf])
    k_inf = np.isposinf(k) & ~lo_inf & ~h_inf
    out[k_inf] = special.ndtr(h[k_inf])
    rest = ~(lo_inf | h_inf | k_inf)
    hh = h[rest]
    kk = k[rest]
    hh = np.where(hh == 0.0, 1e-150, hh)
    kk = np.where(kk == 0.0, 1e-150, kk)
    s = math.sqrt(1.0 - rho * rho)
    th = special.owens_t(hh, (kk - rho * hh) / (hh * s))
    tk = special.owens_t(kk, (hh - rho * kk) / (kk * s))
    beta = np.where(hh * kk > 0, 0.0, 0.5)
    val = 0.5 * special.ndtr(hh) + 0.5 * special.ndtr(kk) - th - tk - beta
    out[rest] = np.clip(val, 0.0, 1.0)
    return out


@dataclass(frozen=True)
class BivariateCopula:
    """A one-parameter bivariate copula.

    Parameters are: ``gaussian`` correlation in (-1, 1); ``clayton`` theta > 0;
    ``fgm`` alpha in [-1, 1].  ``independence`` and ``comonotonic`` ignore the
    parameter and exist so the product operator has its unit and identity.
    """

    family: str
    parameter: float = 0.0

    def __post_init__(self):
        f, p = self.family, self.parameter
        if f not in FAMILIES:
            raise ModelError(f"unknown copula family {f!r}; expected one of {FAMILIES}")
        if not np.isfinite(p):
            raise ModelError("copula parameter must be finite")
        if f == "gaussian" and not -1.0 < p < 1.0:
            raise ModelError(f"gaussian rho must lie in (-1, 1), got {p}")
        if f == "clayton" and not p > 0.0:
            raise ModelError(f"clayton theta must be > 0, got {p}")
        if f == "fgm" and not -1.0 <= p <= 1.0:
            raise ModelError(f"fgm alpha must lie in [-1, 1], got {p}")

    @property
    def has_density(self) -> bool:
        return self.family != "comonotonic"

    def cdf(self, u, v):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        f, p = self.family, self.parameter
        if f == "independence":
            out = u * v
        elif f == "comonotonic":
            out = np.minimum(u, v)
        elif f == "fgm":
            out = u * v * (1.0 + p * (1.0 - u) * (1.0 - v))
        elif f == "clayton":
            with np.errstate(divide="ignore", over="ignore"):
                a = u**-p + v**-p - 1.0
                out = np.where((u == 0) | (v == 0), 0.0, a ** (-1.0 / p))
        else:
            out = _bvn_cdf(special.ndtri(u), special.ndtri(v), p)
        return out[()] if np.ndim(out) == 0 else out

    def d1(self, u, v):
        """Partial derivative in the first argument: the CDF of V given U = u."""
        u = np.asarray(u, dtype=float)
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        f, p = self.family, self.parameter
        if f == "independence":
            out = np.broadcast_to(v, np.broadcast(u, v).shape).astype(float)
        elif f == "comonotonic":
            out = np.where(v >= u, 1.0, 0.0)
        elif f == "fgm":
            out = v + p * v * (1.0 - v) * (1.0 - 2.0 * u)
        elif f == "clayton":
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                a = u**-p + v**-p - 1.0
                out = np.exp((-p - 1.0) * np.log(u) + (-1.0 / p - 1.0) * np.log(a))
            out = np.where(v <= 0, 0.0, np.where(v >= 1, 1.0, out))
        else:
            s = math.sqrt(1.0 - p * p)
            with np.errstate(invalid="ignore"):
                out = special.ndtr((special.ndtri(v) - p * special.ndtri(u)) / s)
            out = np.where(v <= 0, 0.0, np.where(v >= 1, 1.0, out))
        out = np.clip(out, 0.0, 1.0)
        return out[()] if np.ndim(out) == 0 else out

    def density(self, u, v):
        if not self.has_density:
            raise CapabilityError("the comonotonic copula has no density")
        # Quadrature nodes can round onto the boundary, where some densities blow up.
        u = np.clip(np.asarray(u, dtype=float), 1e-16, 1.0 - 1e-16)
        v = np.clip(np.asarray(v, dtype=float), 1e-16, 1.0 - 1e-16)
        f, p = self.family, self.parameter
        if f == "independence":
            out = np.ones(np.broadcast(u, v).shape)
        elif f == "fgm":
            out = 1.0 + p * (1.0 - 2.0 * u) * (1.0 - 2.0 * v)
        elif f == "clayton":
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                a = u**-p + v**-p - 1.0
                out = np.exp(math.log1p(p) + (-p - 1.0) * np.log(u * v) + (-1.0 / p - 2.0) * np.log(a))
        else:
            x = special.ndtri(u)
            y = special.ndtri(v)
            r2 = 1.0 - p * p
            out = np.exp(-(p * p * (x * x + y * y) - 2.0 * p * x * y) / (2.0 * r2)) / math.sqrt(r2)
        return out[()] if np.ndim(out) == 0 else out

    def conditional_quantile_closed(self, u, w):
        """Inverse of ``d1`` in its second argument, in closed form."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        f, p = self.family, self.parameter
        if f == "independence":
            out = np.broadcast_to(w, np.broadcast(u, w).shape).astype(float)
        elif f == "comonotonic":
            out = np.broadcast_to(u, np.broadcast(u, w).shape).astype(float)
        elif f == "fgm":
            a = p * (1.0 - 2.0 * u)
            small = np.abs(a) < 1e-12
            safe_a = np.where(small, 1.0, a)
            disc = np.maximum((1.0 + a) ** 2 - 4.0 * a * w, 0.0)
            # Rationalised root avoids cancellation for small |a|.
            root = 2.0 * w / ((1.0 + safe_a) + np.sqrt(np.where(small, (1.0 + safe_a) ** 2, disc)))
            out = np.where(small, w, root)
        elif f == "clayton":
            a = (w * u ** (p + 1.0)) ** (-p / (1.0 + p))
            with np.errstate(over="ignore"):
                out = (a - u**-p + 1.0) ** (-1.0 / p)
        else:
            out = special.ndtr(p * special.ndtri(u) + math.sqrt(1.0 - p * p) * special.ndtri(w))
        out = np.clip(out, 0.0, 1.0)
        return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GridCopula:
    """A bivariate copula tabulated on a uniform lattice, bilinearly interpolated."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1] or vals.shape[0] < 2:
            raise ModelError("grid copula needs a square lattice with at least 2 points per side")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_n)

    has_density = False

    def cdf(self, u, v):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
        n1 = self.grid_n - 1
        x = u * n1
        y = v * n1
        i = np.clip(np.floor(x).astype(int), 0, n1 - 1)
        j = np.clip(np.floor(y).astype(int), 0, n1 - 1)
        fx = x - i
        fy = y - j
        V = self.values
        out = (
            V[i, j] * (1 - fx) * (1 - fy)
            + V[i + 1, j] * fx * (1 - fy)
            + V[i, j + 1] * (1 - fx) * fy
            + V[i + 1, j + 1] * fx * fy
        )
        return out[()] if np.ndim(out) == 0 else out

    def d1(self, u, v, step=1e-6):
        u = np.asarray(u, dtype=float)
        lo = np.clip(u - step, 0.0, 1.0)
        hi = np.clip(u + step, 0.0, 1.0)
        out = (self.cdf(hi, v) - self.cdf(lo, v)) / (hi - lo)
        return np.clip(out, 0.0, 1.0)

    def to_csv(self, path) -> None:
        """Write ``u,v,C`` rows with 17 significant digits."""
        nodes = self.nodes
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u", "v", "C"])
            for a, ua in enumerate(nodes):
                for b, vb in enumerate(nodes):
                    w.writerow([f"{ua:.17g}", f"{vb:.17g}", f"{self.values[a, b]:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "GridCopula":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        vals = np.array([float(r[2]) for r in rows])
        n = int(round(math.sqrt(vals.size)))
        if n * n != vals.size:
            raise ModelError("grid copula CSV is not a square lattice")
        return cls(vals.reshape(n, n))


@dataclass(frozen=True)
class DependenceSpec:
    """Dependence structure of the capacity time series."""

    kind: str
    bivariate: BivariateCopula | GridCopula | None = None

    def __post_init__(self):
        if self.kind not in ("comonotonic", "independent", "markov"):
            raise ModelError(f"unknown dependence kind {self.kind!r}")
        if self.kind == "markov" and self.bivariate is None:
            raise ModelError("markov dependence requires a bivariate copula")

    @classmethod
    def comonotonic(cls) -> "DependenceSpec":
        return cls("comonotonic")

    @classmethod
    def independent(cls) -> "DependenceSpec":
        return cls("independent")

    @classmethod
    def markov(cls, family: str | BivariateCopula | GridCopula, parameter: float = 0.0) -> "DependenceSpec":
        cop = family if not isinstance(family, str) else BivariateCopula(family, parameter)
        return cls("markov", cop)

    @property
    def effective_kind(self) -> str:
        """Markov chains driven by the two degenerate pair copulas collapse."""
        if self.kind == "markov" and isinstance(self.bivariate, BivariateCopula):
            if self.bivariate.family == "comonotonic":
                return "comonotonic"
            if self.bivariate.family == "independence":
                return "independent"
        return self.kind

    @property
    def label(self) -> str:
        if self.kind != "markov":
            return self.kind
        c = self.bivariate
        if isinstance(c, GridCopula):
            return f"markov-grid{c.grid_n}"
        return f"markov-{c.family}({c.parameter:g})"


# -- conditional distribution -------------------------------------------------
def d1_conditional(c, u, v):
    """``D1C(u, v)``: conditional CDF of the second coordinate given the first."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0) or np.any(u_arr >= 1):
        raise DomainError("d1_conditional needs u strictly inside (0, 1)")
    return c.d1(u, v)


def _bisect_quantile(c, u, w, tol=1e-10, max_iter=200):
    u, w = np.broadcast_arrays(np.asarray(u, float), np.asarray(w, float))
    lo = np.zeros(u.shape)
    hi = np.ones(u.shape)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = c.d1(u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol):
            out = 0.5 * (lo + hi)
            return out[()] if out.ndim == 0 else out
    raise NumericError(f"conditional quantile bisection did not reach {tol} in {max_iter} iterations")


def conditional_quantile(c, u, w, method: str = "auto"):
    """Solve ``D1C(u, v) = w`` for ``v``.

    ``method="auto"`` uses the closed-form inverse where the family has one and
    bisection otherwise; ``method="bisect"`` forces bisection to 1e-10.
    """
    u_arr = np.asarray(u, dtype=float)
    w_arr = np.asarray(w, dtype=float)
    if np.any(u_arr <= 0) or np.any(u_arr >= 1) or np.any(w_arr <= 0) or np.any(w_arr >= 1):
        raise DomainError("conditional_quantile needs u and w strictly inside (0, 1)")
    if method == "auto" and isinstance(c, BivariateCopula):
        return c.conditional_quantile_closed(u, w)
    if method not in ("auto", "bisect"):
        raise DomainError(f"unknown method {method!r}")
    return _bisect_quantile(c, u, w)


# -- product operator -----------------------------------------------------------
def product_operator(a, b, grid_n: int = 64, refine: int | None = None) -> GridCopula:
    """Markov product ``(A*B)(u, v) = int_0^1 d_t A(u, t) d_t B(t, v) dt`` on a lattice.

    On a grid refining the output lattice, the difference quotient of
    ``t -> A(u, t)`` is summed against the increments of ``t -> B(t, v)``.  Both
    factors enter through their CDFs, so the comonotonic copula (identity of the
    product) and the independence copula are reproduced exactly.
    """
    if grid_n < 16:
        raise DomainError("product_operator needs grid_n >= 16")
    if refine is None:
        refine = max(1, int(math.ceil(4096 / (grid_n - 1))))
    nodes = np.linspace(0.0, 1.0, grid_n)
    t = np.linspace(0.0, 1.0, (grid_n - 1) * refine + 1)
    dt = np.diff(t)
    slope_a = np.diff(a.cdf(nodes[:, None], t[None, :]), axis=1) / dt[None, :]
    inc_b = np.diff(b.cdf(t[:, None], nodes[None, :]), axis=0)
    vals = slope_a @ inc_b
    vals[0, :] = 0.0
    vals[:, 0] = 0.0
    vals[-1, :] = nodes
    vals[:, -1] = nodes
    return GridCopula(np.clip(vals, 0.0, 1.0))


# -- joint probabilities --------------------------------------------------------
def _markov_rectangle(c, lower, upper) -> float:
    """``P(lower_i < U_i <= upper_i, i = 1..k)`` for the copula Markov chain."""
    k = len(lower)
    widths = upper - lower
    if np.any(widths <= 0):
        return 0.0
    if k == 1:
        return float(widths[0])
    if k == 2:
        a1, a2 = lower
        b1, b2 = upper
        val = c.cdf(b1, b2) - c.cdf(a1, b2) - c.cdf(b1, a2) + c.cdf(a1, a2)
        return float(min(max(val, 0.0), 1.0))
    if not c.has_density:
        raise CapabilityError("Markov quadrature needs a pair copula with a density")
    nodes, weights = zip(*(_gl_graded(lower[j], upper[j]) for j in range(k - 1)))
    # g(w) = P(U_k in (a_k, b_k] | U_{k-1} = w), exact through D1C.
    g = c.d1(nodes[k - 2], upper[k - 1]) - c.d1(nodes[k - 2], lower[k - 1])
    for j in range(k - 3, -1, -1):
        kern = c.density(nodes[j][:, None], nodes[j + 1][None, :])
        g = kern @ (weights[j + 1] * g)
    val = float(np.dot(weights[0], g))
    return min(max(val, 0.0), 1.0)


def sample_uniform_paths(spec: DependenceSpec, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, t)`` array of copula-uniform paths."""
    if t < 1:
        raise DomainError("horizon t must be >= 1")
    kind = spec.effective_kind
    if kind == "comonotonic":
        u = rng.random(n)
        out = np.repeat(u[:, None], t, axis=1)
    elif kind == "independent":
        out = rng.random((n, t))
    else:
        c = spec.bivariate
        out = np.empty((n, t))
        out[:, 0] = rng.random(n)
        w = rng.random((n, t - 1)) if t > 1 else None
        for i in range(1, t):
            prev = np.clip(out[:, i - 1], 1e-15, 1 - 1e-15)
            wi = np.clip(w[:, i - 1], 1e-15, 1 - 1e-15)
            if isinstance(c, BivariateCopula):
                out[:, i] = c.conditional_quantile_closed(prev, wi)
            else:
                out[:, i] = _bisect_quantile(c, prev, wi)
    return np.clip(out, 0.0, _ONE_MINUS)


def orthant_prob_mc(spec, lower, upper, n: int = 10**6, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of a uniform-scale rectangle probability."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    rng = np.random.default_rng(seed)
    u = sample_uniform_paths(spec, lower.size, n, rng)
    hit = np.all((u > lower) & (u <= upper), axis=1)
    p = float(hit.mean())
    return p, math.sqrt(p * (1 - p) / n)


def rectangle_prob(spec: DependenceSpec, lower, upper, *, mc_samples: int | None = None, seed: int = 0) -> float:
    """Probability that each copula coordinate lies in ``(lower_i, upper_i]``."""
    lower = np.clip(np.asarray(lower, dtype=float), 0.0, 1.0)
    upper = np.clip(np.asarray(upper, dtype=float), 0.0, 1.0)
    if lower.size == 0 or lower.shape != upper.shape:
        raise DomainError("rectangle bounds must be nonempty and of equal length")
    kind = spec.effective_kind
    if kind == "comonotonic":
        return float(max(upper.min() - lower.max(), 0.0))
    if kind == "independent":
        return float(np.prod(np.maximum(upper - lower, 0.0)))
    if lower.size > MAX_QUADRATURE_DIM:
        if mc_samples is None:
            raise CapabilityError(
                f"Markov quadrature supports at most {MAX_QUADRATURE_DIM} coordinates; pass mc_samples to fall back"
            )
        return orthant_prob_mc(spec, lower, upper, mc_samples, seed)[0]
    return _markov_rectangle(spec.bivariate, lower, upper)


def copula_cdf(spec: DependenceSpec, u) -> float:
    """Value of the ``d``-dimensional time copula at ``u``."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise DomainError("copula_cdf needs a nonempty vector")
    if np.any(u < 0) or np.any(u > 1):
        raise DomainError("copula arguments must lie in [0, 1]")
    kind = spec.effective_kind
    if kind == "comonotonic":
        return float(u.min())
    if kind == "independent":
        return float(np.prod(u))
    return rectangle_prob(spec, np.zeros_like(u), u)


def survival_copula(spec: DependenceSpec, v) -> float:
    """``P(U_i > 1 - v_i for all i)``, the survival copula at ``v``."""
    v = np.asarray(v, dtype=float).ravel()
    return rectangle_prob(spec, 1.0 - v, np.ones_like(v))


def _levels(m: Marginal, thresholds):
    x = np.asarray(thresholds, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("thresholds must be nonempty")
    return np.where(np.isposinf(x), 1.0, m.cdf(np.where(np.isposinf(x), 0.0, x)))


def joint_orthant_prob(spec: DependenceSpec, m: Marginal, thresholds, *, mc_samples: int | None = None, seed: int = 0) -> float:
    """``P(C_1 <= x_1, ..., C_k <= x_k)`` for consecutive slots."""
    u = _levels(m, thresholds)
    return rectangle_prob(spec, np.zeros_like(u), u, mc_samples=mc_samples, seed=seed)


def joint_survival_prob(spec: DependenceSpec, m: Marginal, thresholds, *, mc_samples: int | None = None, seed: int = 0) -> float:
    """``P(C_1 > x_1, ..., C_k > x_k)`` for consecutive slots."""
    u = _levels(m, thresholds)
    return rectangle_prob(spec, u, np.ones_like(u), mc_samples=mc_samples, seed=seed)


def sample_paths(spec: DependenceSpec, m: Marginal, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, t)`` capacity paths with marginal ``m`` and dependence ``spec``."""
    return np.asarray(m.quantile(sample_uniform_paths(spec, t, n, rng)))


def sample_path(spec: DependenceSpec, m: Marginal, t: int, rng_seed: int) -> np.ndarray:
    """One capacity path of length ``t``; deterministic in ``rng_seed``."""
    return sample_paths(spec, m, t, 1, np.random.default_rng(rng_seed))[0]


def spearman_rho(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)
