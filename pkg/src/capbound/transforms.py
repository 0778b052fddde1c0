"""MGF and Mellin transforms of cumulative capacity, effective capacity and
stochastic strict service curves.

Conventions: ``Mbar(theta) = E[exp(-theta S)]`` for ``theta >= 0``; capacity is
in bits, so the Mellin variable is ``2**S = exp(S / log2(e))`` and
``E[(2**S)**(v - 1)] = E[exp((v - 1) ln2 S)]``.

The dependence-free bounds are the equal-split standard bounds
``F^u(r) = min(tau F(r/tau), 1)`` and ``F^l(r) = max(1 - tau Fbar(r/tau), 0)``.
``F^u`` reaches 1 at ``Omega_u = tau F^{-1}(1/tau)`` and ``F^l`` leaves 0 at
``Omega_l = tau F^{-1}(1 - 1/tau)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .csvio import write_columns
from .cumulative_cdf import BoundPair, CdfCurve
from .errors import DomainError, NumericError
from .marginals import LN2, Marginal

LOG2E = 1.0 / LN2
MODES = ("iid", "dep-lower", "dep-upper")


def _check_theta(theta, strict=False):
    theta = float(theta)
    if not math.isfinite(theta) or theta < 0 or (strict and theta == 0):
        raise DomainError(f"theta must be {'>' if strict else '>='} 0, got {theta}")
    return theta


def _check_tau(tau):
    if int(tau) != tau or tau < 1:
        raise DomainError(f"tau must be an integer >= 1, got {tau}")
    return int(tau)


def _quad(fn, a, b):
    val, _ = integrate.quad(fn, a, b, epsabs=1e-14, epsrel=1e-11, limit=400)
    return float(val)


# -- MGF ------------------------------------------------------------------------
def mgf_iid(m: Marginal, tau: int, theta: float) -> float:
    """``(E[exp(-theta C)])**tau``."""
    theta, tau = _check_theta(theta), _check_tau(tau)
    return math.exp(tau * m.cgf(-theta))


def _stieltjes_linear(curve: CdfCurve, theta: float) -> float:
    """``int exp(-theta r) dF`` for the piecewise-linear ``F`` through the curve.

    ``F`` jumps from 0 to ``ps[0]`` at ``xs[0]``; mass missing beyond the last
    point is dropped, so at ``theta = 0`` the result is ``ps[-1]``.
    """
    xs, ps = curve.xs, curve.ps
    x0 = xs[0]
    atom = ps[0]
    h = np.diff(xs)
    dp = np.diff(ps)
    th = theta * h
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = np.where(th > 1e-12, -np.expm1(-th) / np.where(th > 1e-12, th, 1.0), 1.0 - 0.5 * th)
    # Factor exp(-theta x0) out so large shifts do not underflow the sum.
    rel = np.exp(-theta * (xs[:-1] - x0))
    inner = atom + float(np.sum(dp * rel * avg))
    return math.exp(-theta * x0) * inner


def mgf_bounds_dependent(bounds: BoundPair, theta: float) -> tuple[float, float]:
    """``(Mbar^dl, Mbar^du)`` from the lower and upper CDF curves of ``bounds``."""
    theta = _check_theta(theta)
    return _stieltjes_linear(bounds.lower, theta), _stieltjes_linear(bounds.upper, theta)


def omega_upper(m: Marginal, tau: int) -> float:
    tau = _check_tau(tau)
    if tau == 1:
        raise DomainError("Omega_u needs tau > 1: the upper bound never saturates at tau = 1")
    return tau * float(m.quantile(1.0 / tau))


def omega_lower(m: Marginal, tau: int) -> float:
    tau = _check_tau(tau)
    if tau == 1:
        return float(m.support_min)
    return tau * float(m.quantile(1.0 - 1.0 / tau))


def omega_points(gamma_snr: float, tau: int) -> tuple[float, float]:
    """``(Omega_l, Omega_u)`` for the Rayleigh channel."""
    if not gamma_snr > 0:
        raise DomainError("gamma_snr must be > 0")
    tau = _check_tau(tau)
    if tau == 1:
        raise DomainError("Omega_u needs tau > 1")
    om_l = tau * math.log2(1.0 - gamma_snr * math.log(1.0 / tau))
    om_u = tau * math.log2(1.0 - gamma_snr * math.log1p(-1.0 / tau))
    return om_l, om_u


def log_mgf_bounds_equal_split(m: Marginal, tau: int, theta: float) -> tuple[float, float]:
    """``(log Mbar^dl, log Mbar^du)`` for the equal-split bounds of ``tau`` slots."""
    theta, tau = _check_theta(theta), _check_tau(tau)
    if tau == 1 or theta == 0:
        v = tau * m.cgf(-theta) if tau == 1 else 0.0
        return v, v
    om_u = omega_upper(m, tau)
    om_l = omega_lower(m, tau)
    start = tau * m.support_min
    # Mbar^du = exp(-theta Om_u) + theta int_start^Om_u exp(-theta r) tau F(r/tau) dr
    part = _quad(lambda r: math.exp(-theta * (r - om_u)) * tau * float(m.cdf(r / tau)), start, om_u)
    log_du = -theta * om_u + math.log1p(theta * part)
    # Mbar^dl = exp(-theta Om_l) theta int_0^inf exp(-theta y) (1 - tau Fbar((Om_l + y)/tau)) dy
    tail = _quad(lambda y: math.exp(-theta * y) * (1.0 - tau * float(m.sf((om_l + y) / tau))), 0.0, np.inf)
    if not tail > 0:
        raise NumericError("lower MGF bound integral vanished")
    log_dl = -theta * om_l + math.log(theta * tail)
    return log_dl, log_du


def mgf_bounds_equal_split(m: Marginal, tau: int, theta: float) -> tuple[float, float]:
    lo, up = log_mgf_bounds_equal_split(m, tau, theta)
    return math.exp(lo), math.exp(up)


def mgf_bounds_rayleigh(gamma_snr: float, tau: int, theta: float) -> tuple[float, float]:
    """Rayleigh ``(Mbar^dl, Mbar^du)`` in their integrated-by-parts closed forms.

    ``Mbar^du = tau (1 - exp((1 - 2^(Om_u/tau))/g - theta Om_u))
              - theta tau int_0^Om_u exp((1 - 2^(r/tau))/g - theta r) dr``
    ``Mbar^dl = tau exp((1 - 2^(Om_l/tau))/g - theta Om_l)
              - theta tau int_Om_l^inf exp((1 - 2^(r/tau))/g - theta r) dr``
    """
    theta, tau = _check_theta(theta), _check_tau(tau)
    g = float(gamma_snr)
    if tau == 1:
        v = mgf_iid(Marginal.rayleigh(g), 1, theta)
        return v, v
    om_l, om_u = omega_points(g, tau)

    def e(r):
        w = r / tau
        if w > 60.0:
            return 0.0
        return math.exp((1.0 - 2.0**w) / g - theta * r)

    du = tau * (1.0 - e(om_u)) - theta * tau * _quad(e, 0.0, om_u)
    dl = tau * e(om_l) - theta * tau * _quad(e, om_l, np.inf)
    return dl, du


# -- effective capacity ------------------------------------------------------------
@dataclass(frozen=True)
class EffectiveCapacity:
    """Effective capacity with the convergence trail of the dependent modes."""

    rate: float
    mode: str
    theta: float
    taus: tuple = ()
    rates: tuple = ()

    @property
    def previous(self) -> float:
        return self.rates[-2] if len(self.rates) > 1 else self.rate

    @property
    def gap(self) -> float:
        return abs(self.rate - self.previous)

    def __float__(self) -> float:
        return self.rate


def _tau_ladder(tau_limit: int) -> list[int]:
    taus, t = [], 2
    while t < tau_limit:
        taus.append(t)
        t *= 2
    taus.append(int(tau_limit))
    return taus


def effective_capacity(m: Marginal, theta: float, mode: str = "iid", tau_limit: int = 256) -> EffectiveCapacity:
    """``-(1/(theta tau)) log Mbar(theta)`` for ``S(tau)``.

    ``iid`` is tau-free. The dependent modes use the equal-split bound MGFs,
    ``dep-lower`` from ``Mbar^du`` and ``dep-upper`` from ``Mbar^dl``, evaluated
    on ``tau = 2, 4, ..., tau_limit``.
    """
    theta = _check_theta(theta, strict=True)
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "iid":
        return EffectiveCapacity(-m.cgf(-theta) / theta, mode, theta)
    tau_limit = _check_tau(tau_limit)
    if tau_limit < 2:
        raise DomainError("tau_limit must be >= 2 for the dependent modes")
    taus = _tau_ladder(tau_limit)
    pick = 1 if mode == "dep-lower" else 0
    rates = tuple(-log_mgf_bounds_equal_split(m, t, theta)[pick] / (theta * t) for t in taus)
    return EffectiveCapacity(rates[-1], mode, theta, tuple(taus), rates)


def export_effective_capacity(path, thetas, rates) -> None:
    write_columns(path, {"theta": [float(t) for t in thetas], "rate": [float(r) for r in rates]})


# -- Mellin ----------------------------------------------------------------------------
def _upper_gamma(a: float, x: float) -> float:
    if a > 0:
        return float(special.gammaincc(a, x) * special.gamma(a))
    return _quad(lambda r: r ** (a - 1.0) * math.exp(-r), x, np.inf)


def mellin_iid_rayleigh(gamma_snr: float, tau: int, v: float) -> float:
    """``(e^{1/g} g^{v-1} Gamma(v, 1/g))**tau``."""
    g = float(gamma_snr)
    if not g > 0:
        raise DomainError("gamma_snr must be > 0")
    tau = _check_tau(tau)
    if v == 1:
        return 1.0
    one = math.exp(1.0 / g) * g ** (v - 1.0) * _upper_gamma(float(v), 1.0 / g)
    return one**tau


def mellin_bounds_dependent(gamma_snr: float, tau: int, v: float) -> tuple[float, float]:
    """``(lower, upper)`` on ``E[(2**S)**(v-1)]`` for any dependence, ``v < 1``.

    ``r**(v-1)`` decreases in ``r`` only for ``v < 1``, which is what lets the
    CDF bounds order the transform. In the bit scale this is the MGF bound pair
    at ``theta = (1 - v) ln 2``.
    """
    if not v < 1:
        raise DomainError(f"Mellin dependence bounds need v < 1, got {v}")
    if not gamma_snr > 0:
        raise DomainError("gamma_snr must be > 0")
    lo, up = mgf_bounds_equal_split(Marginal.rayleigh(gamma_snr), tau, (1.0 - v) * LN2)
    return lo, up


def mellin_lower_relaxed(gamma_snr: float, tau: int, v: float) -> float:
    """Looser lower bound with ``r**(v-2)`` replaced by ``exp((v-2) r)``.

    ``(1/g) int_{2^Om_l}^inf exp((v-2) r) 2^(r*/tau) exp((1 - 2^(r*/tau))/g) dr``
    with ``r* = log2 r``. Valid because ``exp(a r) >= r**a`` for ``r >= 1``.
    """
    if not v < 1:
        raise DomainError(f"Mellin dependence bounds need v < 1, got {v}")
    g = float(gamma_snr)
    tau = _check_tau(tau)
    om_l = omega_lower(Marginal.rayleigh(g), tau)
    start = 2.0**om_l

    def f(r):
        w = r ** (1.0 / tau)
        return math.exp((v - 2.0) * r + (1.0 - w) / g) * w

    return _quad(f, start, np.inf) / g


# -- service curves -------------------------------------------------------------------------
@dataclass(frozen=True)
class ServiceCurve:
    """``P(S(s, t) < beta(t - s) - x) <= g(x)``.

    Either ``theta`` is set (``g(x) = exp(-theta x)``) or ``epsilon`` is (fixed
    violation probability at ``x = 0``).
    """

    beta_fn: Callable[[int], float] = field(repr=False)
    theta: float | None = None
    epsilon: float | None = None
    label: str = ""

    def __call__(self, tau) -> float:
        if tau == 0:
            return 0.0
        return float(self.beta_fn(tau))

    def bounding(self, x) -> float:
        if self.theta is None:
            return float(self.epsilon)
        return float(np.exp(-self.theta * np.maximum(x, 0.0)))

    def table(self, taus) -> np.ndarray:
        return np.array([self(t) for t in taus])


def sssc_iid(m: Marginal, theta: float) -> ServiceCurve:
    """Linear curve ``beta(tau) = tau * effective capacity``, ``g(x) = exp(-theta x)``."""
    slope = effective_capacity(m, theta, "iid").rate
    return ServiceCurve(lambda tau: slope * tau, theta=float(theta), label=f"iid slope {slope:.6g}")


def sssc_epsilon(m: Marginal, tau: int, eps: float) -> tuple[float, float]:
    """``(beta_l, beta_u)`` solving ``tau F(beta_l/tau) = eps`` and
    ``1 - tau Fbar(beta_u/tau) = eps``."""
    tau = _check_tau(tau)
    if not 0 < eps < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {eps}")
    return tau * float(m.quantile(eps / tau)), tau * float(m.quantile(1.0 - (1.0 - eps) / tau))


def sssc_rayleigh_dependent(gamma_snr: float, tau: int, eps: float) -> tuple[float, float]:
    """``beta_l = tau log2(1 - g ln(1 - eps/tau))``, ``beta_u = tau log2(1 - g ln((1 - eps)/tau))``."""
    if not gamma_snr > 0:
        raise DomainError("gamma_snr must be > 0")
    tau = _check_tau(tau)
    if not 0 < eps < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {eps}")
    g = float(gamma_snr)
    beta_l = tau * math.log2(1.0 - g * math.log1p(-eps / tau))
    beta_u = tau * math.log2(1.0 - g * math.log((1.0 - eps) / tau))
    return beta_l, beta_u


def rayleigh_epsilon_curves(gamma_snr: float, eps: float) -> tuple[ServiceCurve, ServiceCurve]:
    lo = ServiceCurve(lambda t: sssc_rayleigh_dependent(gamma_snr, t, eps)[0], epsilon=eps, label="beta_l")
    up = ServiceCurve(lambda t: sssc_rayleigh_dependent(gamma_snr, t, eps)[1], epsilon=eps, label="beta_u")
    return lo, up


def sssc_dependent_mgf(bounds: BoundPair, theta: float) -> tuple[float, float]:
    """``(beta^dl, beta^du) = (-log Mbar^du / theta, -log Mbar^dl / theta)`` at ``bounds.tau``."""
    theta = _check_theta(theta, strict=True)
    m_dl, m_du = mgf_bounds_dependent(bounds, theta)
    if not (m_dl > 0 and m_du > 0):
        raise NumericError("MGF bound vanished; widen the bound grid")
    return -math.log(m_du) / theta, -math.log(m_dl) / theta


def export_service_curves(path, taus, beta_l, beta_u, theta_or_epsilon: float) -> None:
    taus = [int(t) for t in taus]
    write_columns(
        path,
        {
            "tau": taus,
            "beta_l": [float(b) for b in beta_l],
            "beta_u": [float(b) for b in beta_u],
            "theta_or_epsilon": [float(theta_or_epsilon)] * len(taus),
        },
    )
