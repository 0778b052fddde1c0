"""One-dimensional instantaneous-capacity distributions.

Capacities are in bits per channel use.  Two kinds are supported:

``rayleigh``
    Closed-form CDF ``F(r) = 1 - exp(-(2**r - 1) / gamma)`` of
    ``log2(1 + gamma |h|^2)`` with ``|h|^2 ~ Exp(1)``.
``tabulated``
    A sampled ``(r, F(r))`` table, linearly interpolated.  The first table
    row may carry an atom (``F(r0) > 0``); below ``r0`` the CDF is zero and
    beyond the last row it is clamped to one.

Every quantity other modules need (survival integrals, moments, generic
expectations, the cumulant generating function) is provided here.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, DomainError, ModelError

LN2 = math.log(2.0)

# Gauss-Legendre rule for short intervals where E1 differences cancel.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)
_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


def _scalar_or_array(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _scaled_e1(x):
    """exp(x) * E1(x), stable for large x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 500.0
    out[small] = np.exp(x[small]) * special.exp1(x[small])
    out[~small] = special.hyperu(1.0, 1.0, x[~small])
    return out


@dataclass(frozen=True)
class Marginal:
    """Distribution of the instantaneous capacity ``C(t)``.

    Build instances with :meth:`rayleigh`, :meth:`tabulated` or
    :meth:`from_csv` rather than calling the constructor directly.
    """

    kind: str
    gamma_snr: float | None = None
    grid_r: np.ndarray | None = field(default=None, compare=False, repr=False)
    grid_F: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "rayleigh":
            g = self.gamma_snr
            if g is None or not np.isfinite(g) or g <= 0:
                raise ModelError(f"gamma_snr must be > 0, got {g!r}")
        elif self.kind == "tabulated":
            r = np.asarray(self.grid_r, dtype=float)
            F = np.asarray(self.grid_F, dtype=float)
            if r.ndim != 1 or r.shape != F.shape or r.size == 0:
                raise ModelError("tabulated marginal needs equal-length 1-D r and F arrays")
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(F))):
                raise ModelError("tabulated marginal contains non-finite values")
            if r[0] < 0:
                raise ModelError("capacity support must lie in [0, inf)")
            if np.any(np.diff(r) <= 0):
                raise ModelError("tabulated r values must be strictly increasing")
            if np.any(np.diff(F) < 0) or F[0] < 0:
                raise ModelError("tabulated F values must be nondecreasing and >= 0")
            if abs(F[-1] - 1.0) > 1e-12:
                raise ModelError("tabulated F must reach 1 at the last row")
            F = F.copy()
            F[-1] = 1.0
            r = r.copy()
            r.setflags(write=False)
            F.setflags(write=False)
            object.__setattr__(self, "grid_r", r)
            object.__setattr__(self, "grid_F", F)
        else:
            raise ModelError(f"unknown marginal kind {self.kind!r}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def rayleigh(cls, gamma_snr: float) -> "Marginal":
        return cls("rayleigh", gamma_snr=float(gamma_snr))

    @classmethod
    def tabulated(cls, r, F) -> "Marginal":
        return cls("tabulated", grid_r=np.asarray(r, float), grid_F=np.asarray(F, float))

    @classmethod
    def point_mass(cls, c: float) -> "Marginal":
        return cls.tabulated([c], [1.0])

    @classmethod
    def from_csv(cls, path) -> "Marginal":
        """Load a two-column ``r,F`` CSV with a header row."""
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) != 2:
                raise ConfigError(f"{path}: expected a two-column header row", line=1)
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise ConfigError(f"{path}: expected 2 columns, got {len(row)}", line=lineno)
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    raise ConfigError(f"{path}: non-numeric value in {row!r}", line=lineno) from None
        if not rows:
            raise ConfigError(f"{path}: no data rows")
        arr = np.array(rows)
        try:
            return cls.tabulated(arr[:, 0], arr[:, 1])
        except ModelError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    # -- distribution functions -------------------------------------------
    @property
    def support_min(self) -> float:
        return 0.0 if self.kind == "rayleigh" else float(self.grid_r[0])

    def cdf(self, r):
        """``P(C <= r)``; zero for ``r`` below the support."""
        x = np.asarray(r, dtype=float)
        if self.kind == "rayleigh":
            pos = np.maximum(x, 0.0)
            with np.errstate(over="ignore"):
                out = np.where(x < 0, 0.0, -np.expm1(-np.expm1(pos * LN2) / self.gamma_snr))
        else:
            out = np.where(x < self.grid_r[0], 0.0, np.interp(x, self.grid_r, self.grid_F))
        return _scalar_or_array(out, r)

    def sf(self, r):
        """Survival function ``1 - F(r)``, computed without cancellation for Rayleigh."""
        x = np.asarray(r, dtype=float)
        if self.kind == "rayleigh":
            pos = np.maximum(x, 0.0)
            with np.errstate(over="ignore"):
                out = np.where(x < 0, 1.0, np.exp(-np.expm1(pos * LN2) / self.gamma_snr))
        else:
            out = 1.0 - np.asarray(self.cdf(x))
        return _scalar_or_array(out, r)

    def pdf(self, r):
        x = np.asarray(r, dtype=float)
        if self.kind == "rayleigh":
            g = self.gamma_snr
            pos = np.maximum(x, 0.0)
            with np.errstate(over="ignore", invalid="ignore"):
                out = np.where(x < 0, 0.0, (LN2 / g) * np.exp(pos * LN2 - np.expm1(pos * LN2) / g))
        else:
            h = 1e-6
            out = (np.asarray(self.cdf(x + h)) - np.asarray(self.cdf(x - h))) / (2 * h)
        return _scalar_or_array(out, r)

    def quantile(self, p):
        """Smallest ``r`` with ``F(r) >= p`` for ``p`` in ``[0, 1)``."""
        q = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q >= 1):
            raise DomainError("quantile level must lie in [0, 1)")
        if self.kind == "rayleigh":
            out = np.log2(1.0 - self.gamma_snr * np.log1p(-q))
        else:
            r, F = self.grid_r, self.grid_F
            idx = np.searchsorted(F, q, side="left")
            idx = np.clip(idx, 0, r.size - 1)
            prev = np.maximum(idx - 1, 0)
            dF = F[idx] - F[prev]
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = np.where(dF > 0, (q - F[prev]) / dF, 1.0)
            out = np.where(idx == 0, r[0], r[prev] + frac * (r[idx] - r[prev]))
        return _scalar_or_array(out, p)

    def upper_point(self, tail: float = 1e-12) -> float:
        """A capacity beyond which at most ``tail`` probability remains."""
        if self.kind == "rayleigh":
            return float(self.quantile(1.0 - tail))
        return float(self.grid_r[-1])

    # -- integrals -------------------------------------------------------
    def survival_integral(self, a: float, b: float) -> float:
        """``int_a^b (1 - F(t)) dt``; ``b`` may be ``inf``."""
        if not (a <= b):
            raise DomainError(f"survival_integral needs a <= b, got a={a}, b={b}")
        if a == b:
            return 0.0
        lo = self.support_min
        total = 0.0
        if a < lo:
            total += min(b, lo) - a
            a = lo
            if b <= lo:
                return total
        if self.kind == "rayleigh":
            return total + self._rayleigh_sf_integral(a, b)
        return total + self._tab_sf_antiderivative(b) - self._tab_sf_antiderivative(a)

    def _rayleigh_sf_integral(self, a, b):
        g = self.gamma_snr
        if math.isfinite(b) and b - a <= 0.5:
            half = 0.5 * (b - a)
            t = a + half * (_GL_X + 1.0)
            return float(half * np.dot(_GL_W, self.sf(t)))

        def term(x):
            # Survival is exp(-(2^x - 1)/g): nothing left once 2^x/g passes ~745.
            if not math.isfinite(x) or x * LN2 - math.log(g) > 6.62:
                return 0.0
            z = 2.0**x / g
            return math.exp(-math.expm1(x * LN2) / g) * float(_scaled_e1(np.array([z]))[0])

        return (term(a) - term(b)) / LN2

    @cached_property
    def _tab_cum(self):
        r, F = self.grid_r, self.grid_F
        seg = 0.5 * ((1 - F[:-1]) + (1 - F[1:])) * np.diff(r)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def _tab_sf_antiderivative(self, x):
        """``int_{r0}^x (1 - F)`` for ``x >= r0``."""
        r, F = self.grid_r, self.grid_F
        if x >= r[-1]:
            return float(self._tab_cum[-1])
        k = int(np.searchsorted(r, x, side="right") - 1)
        Fx = F[k] + (F[k + 1] - F[k]) * (x - r[k]) / (r[k + 1] - r[k])
        return float(self._tab_cum[k] + 0.5 * ((1 - F[k]) + (1 - Fx)) * (x - r[k]))

    @cached_property
    def _moments(self):
        if self.kind == "rayleigh":
            # r = 1/u - 1 maps [0, inf) onto (0, 1].
            def first(u):
                return self.sf(1.0 / u - 1.0) / (u * u)

            def second(u):
                r = 1.0 / u - 1.0
                return 2.0 * r * self.sf(r) / (u * u)

            m1 = integrate.quad(first, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            m2 = integrate.quad(second, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        else:
            r, F = self.grid_r, self.grid_F
            a, b, dF = r[:-1], r[1:], np.diff(F)
            m1 = F[0] * r[0] + np.sum(dF * (a + b) / 2)
            m2 = F[0] * r[0] ** 2 + np.sum(dF * (a * a + a * b + b * b) / 3)
        return float(m1), float(max(m2 - m1 * m1, 0.0))

    def moments(self) -> tuple[float, float]:
        """``(mean, variance)``."""
        return self._moments

    @property
    def mean(self) -> float:
        return self._moments[0]

    def expect(self, fn) -> float:
        """``E[fn(C)]`` for a vectorised ``fn``."""
        if self.kind == "rayleigh":
            g = self.gamma_snr

            def integrand(x):
                return fn(np.log2(1.0 + g * x)) * math.exp(-x)

            val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
            return float(val)
        r, F = self.grid_r, self.grid_F
        total = F[0] * float(fn(np.array([r[0]]))[0])
        a, b, dF = r[:-1], r[1:], np.diff(F)
        nodes = 0.5 * (a[:, None] + b[:, None]) + 0.5 * (b - a)[:, None] * _GL16_X[None, :]
        seg_mean = 0.5 * (fn(nodes) @ _GL16_W)
        return float(total + np.sum(dF * seg_mean))

    def cgf(self, theta: float) -> float:
        """Cumulant generating function ``log E[exp(theta C)]``."""
        theta = float(theta)
        if theta == 0.0:
            return 0.0
        if self.kind == "rayleigh":
            a = theta / LN2
            g = self.gamma_snr
            if a > -1.0:
                with np.errstate(all="ignore"):
                    q = special.gammaincc(a + 1.0, 1.0 / g)
                if q > 0 and np.isfinite(q):
                    return 1.0 / g + a * math.log(g) + float(special.gammaln(a + 1.0)) + math.log(q)
            return math.log(self.expect(lambda c: np.exp(theta * c)))
        r = self.grid_r
        shift = theta * (r[-1] if theta > 0 else r[0])
        val = self.expect(lambda c: np.exp(theta * c - shift))
        return math.log(val) + shift

    def laplace(self, theta: float) -> float:
        """``E[exp(-theta C)]``."""
        return math.exp(self.cgf(-theta))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.asarray(self.quantile(rng.random(size)))
