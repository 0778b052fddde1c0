import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from capbound.errors import DomainError, ModelError
from capbound.marginals import Marginal

# Independent mpmath values (see the oracle notes).
MEAN_G1 = 0.86034738227088595
VAR_G1 = 0.36694658667497329
PDF1_G1 = 0.50998919486790702
MEDIAN_G1 = 0.75970738813890853

ray = Marginal.rayleigh(1.0)


def test_rayleigh_cdf_closed_form():
    assert ray.cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert ray.cdf(0.0) == 0.0
    assert ray.cdf(-1.0) == 0.0


def test_rayleigh_pdf_values():
    assert ray.pdf(0.0) == pytest.approx(math.log(2), abs=1e-12)
    assert ray.pdf(1.0) == pytest.approx(PDF1_G1, abs=1e-12)


def test_rayleigh_median():
    assert ray.quantile(0.5) == pytest.approx(MEDIAN_G1, abs=1e-12)


def test_quantile_endpoints_and_domain():
    assert ray.quantile(0.0) == 0.0
    assert math.isfinite(ray.quantile(1 - 1e-16))
    for bad in (1.0, 1.5, -0.1):
        with pytest.raises(DomainError):
            ray.quantile(bad)


def test_gamma_must_be_positive():
    with pytest.raises((DomainError, ModelError)):
        Marginal.rayleigh(-1.0)


def test_mean_and_variance():
    mean, var = ray.moments()
    assert mean == pytest.approx(MEAN_G1, abs=1e-8)
    assert var == pytest.approx(VAR_G1, abs=1e-8)
    assert ray.survival_integral(0.0, math.inf) == pytest.approx(MEAN_G1, abs=1e-8)


def test_survival_integral_additivity():
    a = ray.survival_integral(0.0, 1.0) + ray.survival_integral(1.0, 2.0)
    assert a == pytest.approx(ray.survival_integral(0.0, 2.0), abs=1e-10)
    assert ray.survival_integral(1.3, 1.3) == 0.0


def test_point_mass_moments():
    pm = Marginal.point_mass(2.5)
    mean, var = pm.moments()
    assert mean == pytest.approx(2.5)
    assert var == pytest.approx(0.0, abs=1e-12)


def test_tabulated_csv_round_trip(tmp_path):
    r = np.linspace(0, 6, 400)
    path = tmp_path / "m.csv"
    path.write_text("r,F\n" + "\n".join(f"{x:.17g},{ray.cdf(x):.17g}" for x in r) + "\n")
    tab = Marginal.from_csv(path)
    xs = np.linspace(0, 6, 37)
    assert np.max(np.abs(tab.cdf(xs) - ray.cdf(xs))) < 1e-3
    assert tab.mean == pytest.approx(MEAN_G1, abs=2e-3)


def test_tabulated_rejects_non_increasing():
    with pytest.raises(ModelError):
        Marginal.tabulated([0, 1, 1], [0, 0.5, 1])


def test_pdf_integrates_to_cdf():
    rs = np.linspace(0.0, 6.0, 100)
    for r in rs:
        val, _ = integrate.quad(lambda x: float(ray.pdf(x)), 0.0, r, epsabs=1e-12)
        assert abs(val - ray.cdf(r)) <= 1e-7


def test_pdf_decreasing_beyond_one():
    rs = np.linspace(1.0, 5.0, 500)
    assert np.all(np.diff(ray.pdf(rs)) < 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(0.0, 12.0), st.floats(0.0, 12.0))
def test_cdf_monotone(g, r1, r2):
    m = Marginal.rayleigh(g)
    lo, hi = sorted((r1, r2))
    assert m.cdf(lo) <= m.cdf(hi)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(1e-6, 1 - 1e-6))
def test_quantile_inverts_cdf(g, p):
    m = Marginal.rayleigh(g)
    r = m.quantile(p)
    assert m.cdf(r) == pytest.approx(p, abs=1e-9)
    assert m.quantile(m.cdf(r)) == pytest.approx(r, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0))
def test_variance_nonnegative(g):
    assert Marginal.rayleigh(g).moments()[1] >= 0
