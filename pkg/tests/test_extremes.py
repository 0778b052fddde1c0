import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capbound.copulas import DependenceSpec, sample_paths
from capbound.errors import DomainError, NoRootError
from capbound.extremes import (
    FIELDS,
    batch_extremes,
    geometric_ratio,
    iid_sup_tail_lundberg,
    lundberg_exponent_iid,
    max_cdf_lower_bound_nongranger,
    min_cdf_upper_bound_nongranger,
    path_extremes,
)
from capbound.marginals import Marginal

ray = Marginal.rayleigh(1.0)
THETA_C12 = 1.5455671288605469  # mpmath root of log E exp(theta (C - 1.2)) = 0


def windows(path):
    """Exhaustive window sums as an oracle for the one-pass statistics."""
    c = list(path)
    t = len(c)
    all_w = [sum(c[j:k]) for j in range(t) for k in range(j + 1, t + 1)]
    fwd = [sum(c[:k]) for k in range(1, t + 1)]
    bwd = [sum(c[j:]) for j in range(t)]
    return dict(
        S_total=sum(c), fwd_max=max(fwd), bwd_max=max(bwd), gen_max=max(all_w),
        fwd_min=min(fwd), bwd_min=min(bwd), gen_min=min(all_w),
        range_gen=max(all_w) - min(all_w), range_fwd=max(fwd) - min(fwd),
    )


def test_path_123():
    e = path_extremes([1, 2, 3])
    assert (e.fwd_max, e.bwd_max, e.gen_max, e.fwd_min, e.bwd_min, e.gen_min, e.range_gen) == (6, 6, 6, 1, 3, 1, 5)


def test_constant_and_single():
    e = path_extremes([0.5] * 4)
    assert e.gen_max == pytest.approx(2.0) and e.gen_min == pytest.approx(0.5) and e.range_gen == pytest.approx(1.5)
    s = path_extremes([2.5])
    assert {getattr(s, f) for f in FIELDS if not f.startswith("range")} == {2.5}
    assert s.range_gen == 0 and s.range_fwd == 0
    with pytest.raises(DomainError):
        path_extremes([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=9))
def test_against_window_enumeration(path):
    e = path_extremes(path)
    ref = windows(path)
    for f in FIELDS:
        assert getattr(e, f) == pytest.approx(ref[f], abs=1e-9)
    assert e.gen_max >= max(e.fwd_max, e.bwd_max) - 1e-12
    assert e.gen_min <= min(e.fwd_min, e.bwd_min) + 1e-12
    b = batch_extremes([path])
    for f in FIELDS:
        assert b[f][0] == pytest.approx(ref[f], abs=1e-9)


def test_nonnegative_paths():
    paths = sample_paths(DependenceSpec.markov("fgm", 1.0), ray, 6, 5000, np.random.default_rng(0))
    b = batch_extremes(paths)
    assert np.allclose(b["fwd_max"], b["S_total"]) and np.allclose(b["bwd_max"], b["S_total"])
    assert np.allclose(b["gen_max"], b["S_total"]) and np.allclose(b["fwd_min"], paths[:, 0])
    assert np.all(b["range_gen"] > 0)


def test_nongranger_t1():
    for spec in (DependenceSpec.independent(), DependenceSpec.markov("fgm", 0.5)):
        assert max_cdf_lower_bound_nongranger(spec, ray, 1, 1.3) == pytest.approx(ray.cdf(1.3))
        assert min_cdf_upper_bound_nongranger(spec, ray, 1, 1.3) == pytest.approx(ray.cdf(1.3))


def test_nongranger_comonotonic():
    for t in (2, 5):
        for x in (1.0, 4.0):
            assert max_cdf_lower_bound_nongranger(DependenceSpec.comonotonic(), ray, t, x) == pytest.approx(ray.cdf(x / t))
            assert min_cdf_upper_bound_nongranger(DependenceSpec.comonotonic(), ray, t, x) == pytest.approx(ray.cdf(x))
    # Comonotonic paths: sup_k S(0,k) = t C, so the max bound is exact.
    paths = sample_paths(DependenceSpec.comonotonic(), ray, 4, 100_000, np.random.default_rng(1))
    p = np.mean(batch_extremes(paths)["fwd_max"] <= 3.0)
    assert abs(p - max_cdf_lower_bound_nongranger(DependenceSpec.comonotonic(), ray, 4, 3.0)) <= 3 * math.sqrt(p * (1 - p) / 1e5)


def test_nongranger_independent_closed_form():
    x, t = 3.0, 4
    expected = np.prod([ray.cdf(x / k) ** k for k in range(1, t + 1)])
    assert max_cdf_lower_bound_nongranger(DependenceSpec.independent(), ray, t, x) == pytest.approx(expected, rel=1e-12)


def test_nongranger_independent_monte_carlo():
    paths = sample_paths(DependenceSpec.independent(), ray, 3, 100_000, np.random.default_rng(2))
    b = batch_extremes(paths)
    n = paths.shape[0]
    p_max = np.mean(b["fwd_max"] <= 2.0)
    assert max_cdf_lower_bound_nongranger(DependenceSpec.independent(), ray, 3, 2.0) <= p_max + 3 * math.sqrt(p_max * (1 - p_max) / n)
    p_min = np.mean(b["fwd_min"] <= 1.0)
    assert min_cdf_upper_bound_nongranger(DependenceSpec.independent(), ray, 3, 1.0) >= p_min - 3 * math.sqrt(p_min * (1 - p_min) / n)


def test_lundberg_iid():
    assert lundberg_exponent_iid(ray, 1.2) == pytest.approx(THETA_C12, abs=1e-9)
    assert iid_sup_tail_lundberg(ray, 1.2, 0.0) == 1.0
    vals = iid_sup_tail_lundberg(ray, 1.2, [1.0, 2.0, 3.0])
    assert vals[1] / vals[0] == pytest.approx(geometric_ratio(ray, 1.2))
    assert vals[2] / vals[1] == pytest.approx(math.exp(-THETA_C12))
    with pytest.raises(NoRootError):
        lundberg_exponent_iid(ray, 0.8)


def test_lundberg_iid_monte_carlo():
    rng = np.random.default_rng(5)
    n, horizon = 100_000, 500
    sup = np.zeros(n)
    for lo in range(0, n, 20_000):
        c = ray.sample(rng, (20_000, horizon)) - 1.2
        sup[lo : lo + 20_000] = np.max(np.cumsum(c, axis=1), axis=1)
    for x in (1.0, 2.0, 4.0):
        p = np.mean(sup >= x)
        assert p - 3 * math.sqrt(p * (1 - p) / n) <= iid_sup_tail_lundberg(ray, 1.2, x)
