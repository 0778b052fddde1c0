import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capbound.errors import CapabilityError, ConfigError, ModelError, NoRootError, NumericError
from capbound.map_lundberg import (
    MapModel,
    enumerate_paths,
    enumerate_small,
    f_hat,
    first_passage_records,
    kappa,
    kappa_and_h,
    likelihood_ratio,
    lundberg_root,
    markov_tail_bound,
    mean_likelihood_ratio,
    path_probabilities,
    reference_model,
    sup_tail_bounds,
    sup_tail_exact,
    tilt,
)

ref = reference_model()
# mpmath: spectral radius of Fhat[theta] through the 2x2 characteristic polynomial.
ROOT = 0.28201116643137114
KAPPA_HALF = 0.12737211010931429


def random_model(seed, k=3):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(k), size=k)
    incs = []
    for _ in range(k):
        row = []
        for _ in range(k):
            vals = np.sort(rng.choice(np.arange(-3, 4), size=3, replace=False)).astype(float)
            row.append((vals, rng.dirichlet(np.ones(3))))
        incs.append(tuple(row))
    return MapModel(tuple(f"s{i}" for i in range(k)), P, tuple(incs))


def test_model_validation():
    with pytest.raises(ModelError):
        MapModel(("a",), [[0.9]], ((([0.0], [1.0]),),))
    with pytest.raises(ModelError):
        MapModel.single_state([0.0, 1.0], [0.5, 0.4])


def test_f_hat_examples():
    assert np.allclose(f_hat(ref, 0.0), ref.P, atol=1e-15)
    single = MapModel.single_state([1.5], [1.0])
    assert f_hat(single, 0.7)[0, 0] == pytest.approx(math.exp(0.7 * 1.5), rel=1e-14)
    theta = 0.4
    direct = np.array(
        [
            [ref.P[i, j] * sum(p * math.exp(theta * v) for v, p in zip(*ref.increments[i][j])) for j in range(2)]
            for i in range(2)
        ]
    )
    assert np.max(np.abs(f_hat(ref, theta) - direct)) <= 1e-14
    with pytest.raises(NumericError):
        f_hat(ref, 1e4)


def test_kappa_examples():
    k0, h0 = kappa_and_h(ref, 0.0)
    assert k0 == 0.0 and np.array_equal(h0, np.ones(2))
    single = MapModel.single_state([1.5], [1.0])
    assert kappa(single, 0.3) == pytest.approx(0.45, abs=1e-14)
    assert kappa(ref, 0.5) == pytest.approx(KAPPA_HALF, abs=1e-10)


def test_kappa_convex():
    thetas = np.linspace(-2, 2, 41)
    k = np.array([kappa(ref, t) for t in thetas])
    assert np.all(k[:-2] - 2 * k[1:-1] + k[2:] >= -1e-12)


def test_tilt_identity_at_zero():
    t = tilt(ref, 0.0)
    assert np.allclose(t.P_tilt, ref.P, atol=1e-15)
    for i in range(2):
        for j in range(2):
            assert np.allclose(t.H_tilt[i][j][1], ref.increments[i][j][1])


@pytest.mark.parametrize("seed", range(100))
def test_tilted_rows_sum_to_one(seed):
    model = random_model(seed)
    t = tilt(model, 0.3 + seed / 100)
    assert np.allclose(t.P_tilt.sum(axis=1), 1.0, atol=1e-10)
    assert t.eigen_residual() <= 1e-10


def test_eigen_residual_on_grid():
    for theta in np.linspace(-1, 1.5, 26):
        assert tilt(ref, theta).eigen_residual() <= 1e-10


def test_lundberg_root_examples():
    assert lundberg_root(ref) == pytest.approx(ROOT, abs=1e-10)
    assert abs(kappa(ref, lundberg_root(ref))) <= 1e-10
    q = 0.3
    walk = MapModel.single_state([-1.0, 1.0], [1 - q, q])
    assert lundberg_root(walk) == pytest.approx(math.log((1 - q) / q), abs=1e-10)
    with pytest.raises(NoRootError):
        lundberg_root(MapModel.single_state([-1.0, 1.0], [0.4, 0.6]))


def test_sup_tail_bounds_ordering():
    for u in range(0, 9):
        b = sup_tail_bounds(ref, u)
        assert np.all(b.refined_lower <= b.refined_upper + 1e-15)
        assert np.all(b.refined_upper <= np.minimum(b.h / b.h.min() * math.exp(-b.theta * u), 1.0) + 1e-15)


def test_random_walk_lundberg_is_classic():
    q = 0.3
    walk = MapModel.single_state([-1.0, 1.0], [1 - q, q])
    theta = math.log((1 - q) / q)
    for u in (0, 1, 3, 6):
        b = sup_tail_bounds(walk, u)
        assert b.lundberg[0] == pytest.approx(math.exp(-theta * u), abs=1e-12)
        # Skip-free upward walk: P(M > u) = (q/(1-q))^(u+1) exactly.
        assert b.refined_lower[0] <= (q / (1 - q)) ** (u + 1) + 1e-12 <= b.refined_upper[0] + 2e-12


def test_enumeration_examples():
    e1 = enumerate_small(ref, 1, start=0)
    direct = {}
    for j in range(2):
        for v, p in zip(*ref.increments[0][j]):
            direct[(j, int(v))] = direct.get((j, int(v)), 0.0) + ref.P[0, j] * p
    assert e1.joint.keys() == direct.keys()
    for key, p in direct.items():
        assert e1.joint[key] == pytest.approx(p, abs=1e-15)
    with pytest.raises(CapabilityError):
        enumerate_small(ref, 13)


def test_mean_likelihood_ratio_is_one():
    theta = lundberg_root(ref)
    for t in range(1, 7):
        for start in (0, 1):
            assert mean_likelihood_ratio(ref, theta, t, start) == pytest.approx(1.0, abs=1e-12)
            assert mean_likelihood_ratio(ref, 0.7, t, start) == pytest.approx(1.0, abs=1e-12)


def test_enumerated_sup_below_bounds():
    theta = lundberg_root(ref)
    levels, lo, hi = sup_tail_exact(ref, 12.0)
    for u in range(0, 13):
        b = sup_tail_bounds(ref, u, theta)
        for i in range(2):
            m6 = enumerate_small(ref, 6, i).sup_tail(u)
            assert m6 <= b.lundberg[i] + 1e-12
            assert m6 <= b.refined_upper[i] + 1e-12
            # The C- bound concerns the infinite horizon.
            assert b.refined_lower[i] <= lo[u, i] + 1e-9
            assert hi[u, i] <= b.refined_upper[i] + 1e-9


def test_first_passage_records_sum_to_passage_probability():
    rec = first_passage_records(ref, 2.0, 6, 0)
    assert sum(rec.values()) == pytest.approx(enumerate_small(ref, 6, 0).sup_tail(2.0), abs=1e-12)
    assert all(xi > 0 for (_, _, xi) in rec)


def test_change_of_measure_identity():
    tab = enumerate_paths(ref, 5, 0)
    for theta in (0.2, lundberg_root(ref), 0.9):
        t = tilt(ref, theta)
        p_tilt = path_probabilities(t.model, tab)
        L = likelihood_ratio(t, tab)
        for phi in (np.sin(tab.sums), (tab.states[:, -1] == 1).astype(float), np.maximum.accumulate(np.cumsum(tab.increments, axis=1), axis=1)[:, -1] > 2):
            assert np.dot(tab.probs, phi) == pytest.approx(np.dot(p_tilt, phi / L), abs=1e-10)


def test_markov_tail_bound():
    e = enumerate_small(ref, 6, 0)
    for x in (1.0, 3.0, 5.0):
        exact = sum(p for (j, s), p in e.joint.items() if s >= x)
        assert exact <= markov_tail_bound(ref, 6, x) + 1e-12


def test_text_round_trip_and_errors():
    back = MapModel.from_text(ref.to_text())
    assert back.states == ref.states and np.array_equal(back.P, ref.P)
    bad = "states a b\nrow a 0.5 0.5\nrow b 0.3 0.3\n"
    with pytest.raises(ConfigError, match="line 3"):
        MapModel.from_text(bad)
    with pytest.raises(ConfigError, match="line 2"):
        MapModel.from_text("states a\nfoo a\n")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(-1.0, 1.0))
def test_random_models_tilt(seed, theta):
    model = random_model(seed)
    t = tilt(model, theta)
    assert np.allclose(t.P_tilt.sum(axis=1), 1.0, atol=1e-10)
    assert t.eigen_residual() <= 1e-10
    assert np.all(t.h > 0) and t.h.max() == pytest.approx(1.0)
