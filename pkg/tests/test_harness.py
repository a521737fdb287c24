import math

import numpy as np
import pytest

from breuer_major import covariance as C
from breuer_major import functionals as F
from breuer_major import spectral as S
from breuer_major.errors import GridError, InsufficientReplicatesError, IntegrabilityError
from breuer_major.harness import (BMObservation, BMPath, brownian_paths, clt_test, compute_L_s,
                                  compute_Z_path, dyadic_grid, dyadic_pairs, fdd_test,
                                  increment_test, jackknife_covariance, run_replicates)
from breuer_major.hermite import Functional, chaos_coefficients
from breuer_major.rng import normal_generator
from breuer_major.simulate import FieldSample, GridSpec, simulate
from breuer_major.variance import v_limit
from oracles import V_H2_GAUSSIAN

ONE = S.hermite_gaussian(1, 1, 1.0)
HG = S.hermite_gaussian(1, 2, 1.0)


def _const_sample(grid, m, value=1.0):
    return FieldSample(grid, np.full((grid.sites, m), value), 0, "const")


def test_constant_functional_gives_zero():
    smp = simulate(HG, GridSpec(1, 8.0, 64), 1)
    G = Functional(lambda x: np.full(len(x), 2.5), 2, label="const")
    assert compute_L_s(smp, G, G0=2.5).L == 0.0


@pytest.mark.parametrize("s", [1.0, 8.0, 50.0])
def test_all_ones_field(s):
    obs = compute_L_s(_const_sample(GridSpec(1, s, 64), 1), F.coordinate(1))
    assert obs.L == pytest.approx(math.sqrt(2 * s), rel=1e-13)
    # n = 2: (2s)^-1 (2s)^2
    obs2 = compute_L_s(_const_sample(GridSpec(2, s, 16), 1), F.coordinate(1))
    assert obs2.L == pytest.approx(2 * s, rel=1e-13)


def test_window_must_fit_grid():
    smp = _const_sample(GridSpec(1, 4.0, 32), 1)
    with pytest.raises(GridError):
        compute_L_s(smp, F.coordinate(1), s=5.0)
    with pytest.raises(GridError):
        compute_L_s(smp, F.product(2))
    with pytest.raises(GridError):
        compute_Z_path(smp, F.coordinate(1), 0.0, [0.0, 1.5])


@pytest.mark.parametrize("n, N", [(1, 256), (2, 64)])
def test_path_endpoints_and_nesting(n, N):
    spec = S.hermite_gaussian(n, 2, 1.0)
    smp = simulate(spec, GridSpec(n, 8.0, N), 4)
    G = F.product(2)
    y = np.linspace(0, 1, 9)
    path = compute_Z_path(smp, G, 0.0, y)
    assert path.Z[0] == 0.0
    assert path.at(1.0) == pytest.approx(compute_L_s(smp, G).L, abs=1e-12)
    for k, yk in enumerate(y[1:], start=1):
        # independent per-y computation with the same box rule
        w = 8.0 * yk ** (1 / n)
        inside = np.max(np.abs(smp.grid.coordinates()), axis=1) < w
        direct = np.sum(G(smp.values)[inside]) * smp.grid.h**n / 16.0 ** (n / 2)
        assert path.Z[k] == pytest.approx(direct, abs=1e-12)


def test_path_rejects_unsorted_grid():
    smp = _const_sample(GridSpec(1, 4.0, 32), 1)
    with pytest.raises(GridError):
        compute_Z_path(smp, F.coordinate(1), 0.0, [0.5, 0.25])


def test_clt_null_calibration():
    passes = 0
    for seed in range(50):
        x = normal_generator(seed, 7).standard_normal(1000) * math.sqrt(2.0)
        passes += clt_test(x, 2.0).passed
    assert passes >= 48


def test_clt_zero_observations_fail():
    obs = [BMObservation(10.0, 0.0, i) for i in range(600)]
    rep = clt_test(obs, 1.0)
    assert not rep.checks["variance"] and not rep.passed
    d = rep.to_dict()
    assert d["passed"] is False and d["thresholds"]["ks_critical"] == pytest.approx(1.6276 / math.sqrt(600), rel=1e-3)


def test_clt_insufficient_replicates():
    with pytest.raises(InsufficientReplicatesError):
        clt_test(np.zeros(10), 1.0)


def test_clt_relative_tolerance():
    x = normal_generator(1, 7).standard_normal(1000)
    rep = clt_test(x, 1.05, variance_rel_tol=0.1)
    assert rep.checks["variance"]
    assert rep.thresholds["variance_rel_tol"] == 0.1


def test_jackknife_covariance_matches_direct():
    rng = normal_generator(3)
    x = rng.standard_normal(50)
    y = 0.5 * x + rng.standard_normal(50)
    cov, se = jackknife_covariance(x, y)
    assert cov == pytest.approx(np.cov(x, y)[0, 1], rel=1e-12)
    loo = np.array([np.cov(np.delete(x, i), np.delete(y, i))[0, 1] for i in range(50)])
    assert se == pytest.approx(math.sqrt(49 / 50 * np.sum((loo - loo.mean()) ** 2)), rel=1e-10)


def test_fdd_on_brownian_paths():
    y = dyadic_grid(3)
    paths = brownian_paths(y, 2000, seed=5, variance=2.0)
    rep = fdd_test(paths, 2.0, [(0.25, 1.0), (0.5, 1.0), (0.25, 0.5)])
    assert rep.passed
    with pytest.raises(InsufficientReplicatesError):
        fdd_test(paths[:10], 2.0, [(0.25, 1.0)])


def test_increment_brownian_calibration():
    y = dyadic_grid(3)
    rep = increment_test(brownian_paths(y, 2000, seed=11), 3.0, dyadic_pairs(3))
    assert rep.statistics["spread"] < 1.5 and rep.passed


def test_increment_skips_degenerate_pairs():
    y = dyadic_grid(2)
    paths = brownian_paths(y, 600, seed=2)
    rep = increment_test(paths, 3.0, [(0.5, 0.5), (0.0, 0.5), (0.25, 0.75)])
    assert len(rep.statistics["pairs"]) == 2
    empty = increment_test(paths, 3.0, [(0.5, 0.5)])
    assert not empty.passed and empty.notes


def test_increment_integrability_guard():
    paths = brownian_paths(dyadic_grid(2), 600, seed=2)
    with pytest.raises(IntegrabilityError):
        increment_test(paths, 4.0, dyadic_pairs(2), integrability=3.0)
    with pytest.raises(ValueError):
        increment_test(paths, 2.0, dyadic_pairs(2))


def test_dyadic_helpers():
    assert dyadic_pairs(1) == [(0.0, 0.5), (0.5, 1.0)]
    assert len(dyadic_pairs(3)) == 2 + 4 + 8
    np.testing.assert_allclose(dyadic_grid(2), [0, 0.25, 0.5, 0.75, 1.0])
    p = BMPath(1.0, np.array([0.0, 0.5]), np.array([0.0, 2.0]))
    assert p.at(0.5) == 2.0
    with pytest.raises(KeyError):
        p.at(0.3)


@pytest.fixture(scope="module")
def abs_replicates():
    G = F.abs_centered(1)
    e = chaos_coefficients(G, q_max=4)
    obs, _, _ = run_replicates(ONE, GridSpec(1, 25.0, 256), G, range(400), e.mean, expansion=e)
    return e, obs


def test_chaos_decomposition_consistency(abs_replicates):
    e, obs = abs_replicates
    model = C.from_spectral(ONE)
    bound = v_limit(e, model).chaos_tail_bound
    resid = np.array([o.L - sum(o.per_chaos.values()) for o in obs]) ** 2
    assert resid.mean() <= bound + 3 * resid.std(ddof=1) / math.sqrt(len(resid))
    assert set(obs[0].per_chaos) == {2, 4}


def test_centering(abs_replicates):
    _, obs = abs_replicates
    L = np.array([o.L for o in obs])
    assert abs(L.mean()) < 3 * L.std(ddof=1) / math.sqrt(len(L))


def test_run_replicates_thread_invariance():
    grid = GridSpec(1, 8.0, 64)
    a = run_replicates(HG, grid, F.product(2), range(6), y_grid=dyadic_grid(2), keep_fields=True)
    b = run_replicates(HG, grid, F.product(2), range(6), y_grid=dyadic_grid(2), threads=3)
    assert [o.L for o in a[0]] == [o.L for o in b[0]]
    assert all(np.array_equal(p.Z, q.Z) for p, q in zip(a[1], b[1]))
    assert len(a[2]) == 6 and b[2] == []


@pytest.mark.slow
def test_h2_variance_at_s100():
    obs, _, _ = run_replicates(ONE, GridSpec(1, 100.0, 1024), F.hermite(1, 2), range(2000))
    var = np.var([o.L for o in obs], ddof=1)
    assert abs(var - V_H2_GAUSSIAN) < 0.1 * V_H2_GAUSSIAN
