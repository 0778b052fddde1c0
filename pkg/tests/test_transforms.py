import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from capbound.copulas import DependenceSpec, sample_paths
from capbound.cumulative_cdf import BoundPair, CdfCurve, exact_cdf_comonotonic, standard_bound_pair, standard_bounds_equal_split
from capbound.csvio import read_columns
from capbound.errors import DomainError
from capbound.marginals import Marginal
from capbound.transforms import (
    effective_capacity,
    export_effective_capacity,
    export_service_curves,
    log_mgf_bounds_equal_split,
    mellin_bounds_dependent,
    mellin_iid_rayleigh,
    mellin_lower_relaxed,
    mgf_bounds_dependent,
    mgf_bounds_equal_split,
    mgf_bounds_rayleigh,
    mgf_iid,
    omega_points,
    rayleigh_epsilon_curves,
    sssc_dependent_mgf,
    sssc_epsilon,
    sssc_iid,
    sssc_rayleigh_dependent,
)

ray = Marginal.rayleigh(1.0)
# mpmath oracles
MGF1 = 0.49524667553648715
EC1 = 0.70269930612366041
EC_SMALL = 0.86032903520776708
MEAN_G1 = 0.86034738227088595
MELLIN_HALF = 0.75787215614131211
OMEGA_U2 = 1.5194147762778171
BETA_L = 0.14427191468856673
BETA_U = 17.689023101076461


def laplace_quad(theta, scale=1.0):
    """E[exp(-theta * scale * C)] by direct quadrature of the Rayleigh density."""
    f = lambda r: math.exp(-theta * scale * r) * math.log(2) * 2**r * math.exp(-(2**r - 1))
    return integrate.quad(f, 0, 12, epsabs=1e-14, limit=200)[0]


def comonotonic_pair(tau, n=4000):
    xs = np.linspace(0, tau * ray.upper_point(1e-14), n)
    c = CdfCurve(xs, exact_cdf_comonotonic(ray, tau, xs))
    return BoundPair(c, c, "standard", tau)


def test_mgf_iid_examples():
    assert mgf_iid(ray, 3, 0.0) == 1.0
    assert mgf_iid(ray, 1, 1.0) == pytest.approx(MGF1, abs=1e-8)
    assert mgf_iid(ray, 2, 1.0) == pytest.approx(mgf_iid(ray, 1, 1.0) ** 2, rel=1e-12)


def test_mgf_bounds_dependent_examples():
    bp = standard_bound_pair(ray, 3, np.linspace(0, 30, 600), equal_split=True)
    lo0, up0 = mgf_bounds_dependent(bp, 0.0)
    assert lo0 == pytest.approx(bp.lower.ps[-1]) and up0 == pytest.approx(1.0)
    for th in np.linspace(0.05, 4, 20):
        lo, up = mgf_bounds_dependent(bp, th)
        assert lo <= up
    cp = comonotonic_pair(4)
    for th in (0.3, 0.7, 1.5):
        lo, up = mgf_bounds_dependent(cp, th)
        assert lo == pytest.approx(laplace_quad(th, 4), abs=1e-6)
        assert up == pytest.approx(lo)


def test_equal_split_mgf_two_routes():
    for tau in (2, 4, 10):
        for th in (0.1, 1.0, 3.0):
            a = mgf_bounds_equal_split(ray, tau, th)
            b = mgf_bounds_rayleigh(1.0, tau, th)
            assert a[0] == pytest.approx(b[0], rel=1e-6, abs=1e-15)
            assert a[1] == pytest.approx(b[1], rel=1e-9)
            assert a[0] <= mgf_iid(ray, tau, th) <= a[1]


def test_equal_split_mgf_matches_grid_stieltjes():
    xs = np.linspace(0, 4 * ray.upper_point(1e-14), 6000)
    bp = standard_bound_pair(ray, 4, xs, equal_split=True)
    lo, up = mgf_bounds_dependent(bp, 0.7)
    a = mgf_bounds_equal_split(ray, 4, 0.7)
    assert lo == pytest.approx(a[0], rel=1e-4) and up == pytest.approx(a[1], rel=1e-4)


def test_effective_capacity_examples():
    assert effective_capacity(ray, 1e-4).rate == pytest.approx(EC_SMALL, abs=1e-8)
    assert effective_capacity(ray, 1e-4).rate == pytest.approx(MEAN_G1, abs=1e-3)
    assert effective_capacity(ray, 1.0).rate == pytest.approx(EC1, abs=1e-8)
    rates = [effective_capacity(ray, t).rate for t in np.linspace(0.01, 5, 40)]
    assert np.all(np.diff(rates) <= 1e-12)
    with pytest.raises(DomainError):
        effective_capacity(ray, 0.0)


def test_effective_capacity_ordering_and_trail():
    for th in (0.1, 0.5, 1.0, 2.0):
        lo = effective_capacity(ray, th, "dep-lower")
        ii = effective_capacity(ray, th, "iid")
        up = effective_capacity(ray, th, "dep-upper")
        assert lo.rate <= ii.rate <= up.rate
        assert lo.taus[-1] == 256 and len(lo.rates) == len(lo.taus)
        assert lo.gap == pytest.approx(abs(lo.rates[-1] - lo.rates[-2]))
    # The dep-lower sequence decreases in tau and dep-upper increases.
    lo = effective_capacity(ray, 1.0, "dep-lower", tau_limit=64)
    up = effective_capacity(ray, 1.0, "dep-upper", tau_limit=64)
    assert np.all(np.diff(lo.rates) <= 1e-12) and np.all(np.diff(up.rates) >= -1e-12)


def test_mellin_iid():
    assert mellin_iid_rayleigh(1.0, 4, 1.0) == 1.0
    assert mellin_iid_rayleigh(2.5, 1, 1.0 + 1e-15) == pytest.approx(1.0, abs=1e-8)
    assert mellin_iid_rayleigh(1.0, 1, 0.5) == pytest.approx(MELLIN_HALF, abs=1e-10)
    assert mellin_iid_rayleigh(1.0, 3, 0.5) == pytest.approx(mellin_iid_rayleigh(1.0, 1, 0.5) ** 3, rel=1e-12)
    # Same quantity through the MGF route: E[2^{(v-1) C}] = E[exp((v-1) ln2 C)].
    for v in (-1.5, -0.2, 0.5, 1.7):
        assert mellin_iid_rayleigh(1.0, 1, v) == pytest.approx(math.exp(ray.cgf((v - 1) * math.log(2))), rel=1e-9)


def test_mellin_bounds_dependent():
    for v in np.linspace(-2, 0.95, 12):
        lo, up = mellin_bounds_dependent(1.0, 4, v)
        assert lo <= mellin_iid_rayleigh(1.0, 4, v) <= up
        assert mellin_lower_relaxed(1.0, 4, v) <= lo + 1e-15
    lo, up = mellin_bounds_dependent(1.0, 1, 0.5)
    assert lo == pytest.approx(MELLIN_HALF, abs=1e-8) and up == pytest.approx(MELLIN_HALF, abs=1e-8)
    with pytest.raises(DomainError):
        mellin_bounds_dependent(1.0, 3, 1.0)
    # Comonotonic: E[exp((v - 1) tau C / log2 e)] lies inside the bounds.
    v, tau = 0.3, 3
    como = laplace_quad((1 - v) * math.log(2), tau)
    lo, up = mellin_bounds_dependent(1.0, tau, v)
    assert lo <= como <= up


def test_omega_points():
    om_l, om_u = omega_points(1.0, 2)
    assert om_u == pytest.approx(OMEGA_U2, abs=1e-12)
    assert om_u == pytest.approx(1.5196, abs=5e-4)
    with pytest.raises(DomainError):
        omega_points(1.0, 1)
    for g in (0.5, 1.0, 4.0):
        for tau in (2, 3, 10, 64):
            om_l, om_u = omega_points(g, tau)
            assert abs(tau * (1 - math.exp(-(2 ** (om_u / tau) - 1) / g)) - 1) <= 1e-10
            assert abs(tau * math.exp(-(2 ** (om_l / tau) - 1) / g) - 1) <= 1e-10


def test_sssc_iid():
    curve = sssc_iid(ray, 1.0)
    assert curve(1) == pytest.approx(effective_capacity(ray, 1.0).rate)
    assert curve(1) == pytest.approx(0.693, abs=0.02)
    assert curve(0) == 0.0
    assert curve(7) == pytest.approx(curve(3) + curve(4), rel=1e-12)
    assert curve.bounding(2.0) == pytest.approx(math.exp(-2.0))


def test_sssc_iid_simulated_violation():
    theta, tau = 1.0, 16
    curve = sssc_iid(ray, theta)
    s = sample_paths(DependenceSpec.independent(), ray, tau, 10**6, np.random.default_rng(12)).sum(axis=1)
    for x in (1.0, 2.0):
        p = np.mean(s < curve(tau) - x)
        assert p - 3 * math.sqrt(p * (1 - p) / s.size) <= math.exp(-theta * x)


def test_sssc_rayleigh_dependent():
    bl, bu = sssc_rayleigh_dependent(1.0, 10, 0.1)
    assert bl == pytest.approx(BETA_L, abs=1e-10)
    assert bu == pytest.approx(BETA_U, abs=1e-9)
    for tau in (1, 2, 5, 30):
        for eps in (0.01, 0.1, 0.5, 0.9):
            lo, up = sssc_rayleigh_dependent(2.0, tau, eps)
            assert lo <= up + 1e-12
            assert (lo, up) == pytest.approx(sssc_epsilon(Marginal.rayleigh(2.0), tau, eps), rel=1e-10)
    with pytest.raises(DomainError):
        sssc_rayleigh_dependent(1.0, 10, 1.0)
    # Root-solving the equal-split bound equations independently.
    up_root = optimize.brentq(lambda s: standard_bounds_equal_split(ray, 10, s)[1] - 0.1, 1e-9, 30, xtol=1e-14)
    lo_root = optimize.brentq(lambda s: standard_bounds_equal_split(ray, 10, s)[0] - 0.1, 1.0, 60, xtol=1e-14)
    assert abs(standard_bounds_equal_split(ray, 10, bl)[1] - 0.1) <= 1e-10
    assert abs(standard_bounds_equal_split(ray, 10, bu)[0] - 0.1) <= 1e-10
    assert up_root == pytest.approx(bl, abs=1e-9) and lo_root == pytest.approx(bu, abs=1e-9)


def test_epsilon_curves_monotone():
    lo, up = rayleigh_epsilon_curves(1.0, 0.1)
    taus = np.arange(1, 65)
    # tau F^{-1}(eps / tau) decreases toward eps * gamma / ln 2; the upper curve grows.
    assert np.all(np.diff(lo.table(taus)) <= 0) and np.all(np.diff(up.table(taus)) >= 0)
    assert lo(64) == pytest.approx(0.1 / math.log(2), abs=1e-6)
    assert lo(0) == 0.0


def test_sssc_dependent_mgf():
    cp = comonotonic_pair(4)
    bdl, bdu = sssc_dependent_mgf(cp, 0.8)
    assert bdl == pytest.approx(-math.log(laplace_quad(0.8, 4)) / 0.8, abs=1e-5)
    assert bdu == pytest.approx(bdl)
    bp = standard_bound_pair(ray, 4, np.linspace(0, 40, 2000), equal_split=True)
    lo, up = sssc_dependent_mgf(bp, 0.8)
    assert lo <= up
    one = standard_bound_pair(ray, 1, np.linspace(0, 10, 4000), equal_split=True)
    assert sssc_dependent_mgf(one, 1.0)[0] == pytest.approx(sssc_iid(ray, 1.0)(1), abs=1e-5)


def test_csv_exports(tmp_path):
    export_service_curves(tmp_path / "s.csv", [1, 2], [0.1, 0.2], [1.0, 2.0], 0.1)
    cols = read_columns(tmp_path / "s.csv")
    assert list(cols) == ["tau", "beta_l", "beta_u", "theta_or_epsilon"]
    export_effective_capacity(tmp_path / "e.csv", [0.5], [0.7])
    assert (tmp_path / "e.csv").read_text() == "theta,rate\n0.5,0.69999999999999996\n"


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(1, 12), st.floats(0.01, 5.0))
def test_transform_orderings(g, tau, theta):
    m = Marginal.rayleigh(g)
    lo, up = log_mgf_bounds_equal_split(m, tau, theta)
    ii = tau * m.cgf(-theta)
    assert lo <= ii + 1e-9 and ii <= up + 1e-9
    assert mgf_iid(m, tau, 0.0) == 1.0
