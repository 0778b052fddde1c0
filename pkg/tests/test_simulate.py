import math

import numpy as np
import pytest

from capbound.copulas import DependenceSpec
from capbound.csvio import read_columns
from capbound.cumulative_cdf import CdfCurve, exact_cdf_comonotonic, standard_bound_pair
from capbound.errors import DomainError
from capbound.marginals import Marginal
from capbound.simulate import ChannelScenario, binomial_stderr, empirical_curve, ks_distance, run, verify_bounds

ray = Marginal.rayleigh(1.0)
MEAN_G1 = 0.86034738227088595


def scenario(dep, t, **kw):
    return ChannelScenario(ray, dep, t, **kw)


def test_scenario_invariants():
    with pytest.raises(DomainError):
        scenario(DependenceSpec.independent(), 0)
    with pytest.raises(DomainError):
        scenario(DependenceSpec.independent(), 2, reference_rate=-1.0)
    assert scenario(DependenceSpec.independent(), 3).label


def test_minimum_samples():
    with pytest.raises(DomainError):
        run(scenario(DependenceSpec.independent(), 2), 999, 0)


def test_comonotonic_cdf_at_four():
    sim = run(scenario(DependenceSpec.comonotonic(), 4), 100_000, 3)
    p = float(sim.prob_le("S_total", 4.0))
    exact = float(exact_cdf_comonotonic(ray, 4, 4.0))
    assert exact == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert abs(p - exact) <= 3 * math.sqrt(exact * (1 - exact) / 1e5)
    # Every path coordinate is the same draw.
    assert np.allclose(sim.samples["S_total"], 4 * sim.samples["fwd_min"])


def test_independent_mean():
    sim = run(scenario(DependenceSpec.independent(), 16), 100_000, 4)
    s = sim.samples["S_total"]
    assert abs(s.mean() - 16 * MEAN_G1) <= 3 * s.std() / math.sqrt(s.size)


def test_determinism_and_workers():
    scn = scenario(DependenceSpec.markov("clayton", 2.0), 5, reference_rate=1.0)
    a = run(scn, 120_000, 11)
    b = run(scn, 120_000, 11, workers=3)
    assert a.equals(b)
    assert not a.equals(run(scn, 120_000, 12))
    assert "net_gen_max" in a.curves


def test_curves_and_stderr():
    sim = run(scenario(DependenceSpec.independent(), 3), 5000, 0)
    for name, c in sim.curves.items():
        assert np.all(np.diff(c.ps) >= 0) and np.all(np.diff(c.xs) > 0)
        assert np.allclose(sim.stderr[name], np.sqrt(c.ps * (1 - c.ps) / 5000))
        assert c.xs.size <= 200
    nonneg = sim.samples
    assert np.allclose(nonneg["fwd_max"], nonneg["S_total"])


@pytest.mark.parametrize("dep", [DependenceSpec.independent(), DependenceSpec.markov("fgm", 1.0), DependenceSpec.comonotonic()])
def test_verify_passes(dep):
    sim = run(scenario(dep, 4), 50_000, 1)
    bp = standard_bound_pair(ray, 4, sim.S.xs)
    assert verify_bounds(sim, bp).passed


def test_swapped_bounds_flagged():
    sim = run(scenario(DependenceSpec.independent(), 4), 50_000, 1)
    bp = standard_bound_pair(ray, 4, sim.S.xs)
    rep = verify_bounds(sim, (bp.upper, bp.lower))
    assert not rep.passed
    interior = [v for v in rep.violations if 0.05 < v.p_hat < 0.95]
    assert interior


def test_ks_examples():
    xs = np.linspace(0, 5, 101)
    c = CdfCurve(xs, np.clip(xs / 5, 0, 1))
    assert ks_distance(c, c) == 0.0
    shifted = CdfCurve(xs, np.clip(xs / 5 + 0.05, 0, 1))
    assert ks_distance(c, shifted) == pytest.approx(0.05)
    sim = run(scenario(DependenceSpec.comonotonic(), 8), 100_000, 2)
    assert ks_distance(sim.S, lambda x: exact_cdf_comonotonic(ray, 8, x)) <= 0.01


def test_empirical_curve_and_stderr():
    curve, err = empirical_curve(np.arange(1000.0), 10)
    assert curve.xs.size == 10
    assert np.allclose(err, binomial_stderr(curve.ps, 1000))
    assert binomial_stderr(0.5, 100) == pytest.approx(0.05)


def test_csv_roundtrip(tmp_path):
    sim = run(scenario(DependenceSpec.independent(), 2), 2000, 0)
    sim.to_csv(tmp_path / "s.csv")
    cols = read_columns(tmp_path / "s.csv")
    sel = np.array(cols["statistic_name"]) == "S_total"
    assert np.array_equal(cols["x"][sel], sim.S.xs)
    assert np.array_equal(cols["p_hat"][sel], sim.S.ps)
    rep = verify_bounds(sim, standard_bound_pair(ray, 2, sim.S.xs))
    rep.to_csv(tmp_path / "v.csv")
    assert (tmp_path / "v.csv").read_text().startswith("x,p_hat,lower,upper,stderr")
