import math

import numpy as np
import pytest

from breuer_major import covariance as C
from breuer_major import functionals as F
from breuer_major import spectral as S
from breuer_major.errors import ModelError, NotWhitenableError, UnsupportedDimensionError
from breuer_major.hermite import Functional, chaos_coefficients
from breuer_major.variance import v_limit
from oracles import V_X1_GAUSSIAN, hermite_gaussian_r


def test_gaussian_eval_examples():
    g = C.gaussian(1, [1.0])
    assert C.eval_r(g, [0.0])[0, 0] == 1.0
    assert C.eval_r(g, [1.0])[0, 0] == pytest.approx(math.exp(-0.5), rel=1e-15)


@pytest.mark.parametrize("ell, rot", [(1.0, 0.0), (0.7, math.pi / 6)])
def test_spectral_model_matches_fourier_closed_form(ell, rot):
    cm = C.from_spectral(S.hermite_gaussian(1, 2, ell, rotation=rot))
    x = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(C.eval_r(cm, x[:, None]), hermite_gaussian_r(x, ell, rot), atol=1e-10)
    assert cm.whitened


def test_spectral_two_dimensional_model_is_whitened():
    cm = C.from_spectral(S.hermite_gaussian(2, 2, 1.0), points_per_axis=257)
    assert cm.whitened
    x = np.array([[0.4, -0.3]])
    # separable: the second axis contributes exp(-x_2^2 / 2)
    expected = hermite_gaussian_r(np.array([0.4]))[0] * math.exp(-0.045)
    np.testing.assert_allclose(C.eval_r(cm, x)[0], expected, atol=1e-10)


def test_non_finite_covariance_raises():
    bad = C.CovarianceModel(1, 1, lambda x: np.where(np.abs(x) > 1, np.nan, 1.0)[:, :, None], 1.0, "bad")
    with pytest.raises(ModelError):
        C.eval_r(bad, [[2.0]])


def test_whiten_identity_for_white_model():
    g = C.gaussian(1, [1.0])
    G = F.hermite(1, 2)
    w, Gw = C.whiten(g, G)
    assert w is g and Gw is G


def test_whiten_scalar_scaling():
    base = C.gaussian(1, [1 / math.sqrt(2)], mixing=[[2.0]])
    assert not base.whitened
    assert C.eval_r(base, [0.0])[0, 0] == pytest.approx(4.0)
    G = F.coordinate(1)
    w, Gw = C.whiten(base, G)
    assert w.whitened
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(C.eval_r(w, x[:, None])[:, 0, 0], np.exp(-x * x), atol=1e-14)
    y = np.array([[0.3], [-1.2]])
    np.testing.assert_allclose(Gw(y), G(2 * y))


def test_whiten_correlated_pair_matches_monte_carlo():
    rho = 0.5
    a = np.array([[1.0, 0.0], [rho, math.sqrt(1 - rho**2)]])
    base = C.gaussian(1, [1.0, 1.0], mixing=a)
    G = F.product(2)
    w, Gw = C.whiten(base, G)
    r0 = C.eval_r(w, [0.0])
    np.testing.assert_allclose(r0, np.eye(2), atol=1e-12)
    V = v_limit(chaos_coefficients(Gw, q_max=4), w).V
    # r(x) = A A^T exp(-x^2/2) = Sigma k(x); G = x1 x2 has C_G = (s12^2 + s11 s22) k^2 with
    # Sigma = [[1, .5], [.5, 1]] -> 1.25 int exp(-x^2) = 1.25 sqrt(pi)
    # Monte Carlo oracle on the unwhitened field: Riemann sum of G over a long window
    from breuer_major.simulate import GridSpec, simulate_many

    spec = S.gaussian_diagonal(1, [1.0, 1.0]).linear_transform(a)
    grid = GridSpec(1, 100.0, 1024)
    vals = []
    for smp in simulate_many(spec, grid, range(600)):
        vals.append(np.sum(G(smp.values) - rho) * grid.h / math.sqrt(2 * grid.s))
    mc = float(np.var(vals, ddof=1))
    se = mc * math.sqrt(2 / len(vals))
    assert abs(V - 1.25 * math.sqrt(math.pi)) < 1e-6
    assert abs(mc - V) < 4 * se


def test_whiten_rejects_singular():
    base = C.gaussian(1, [1.0], mixing=[[1.0], [1.0]])
    with pytest.raises(NotWhitenableError):
        C.whiten(base, F.product(2))


def test_whiten_idempotent():
    a = np.array([[1.0, 0.3], [0.2, 0.9]])
    base = C.gaussian(1, [1.0, 2.0], mixing=a)
    w1, g1 = C.whiten(base, F.product(2))
    w2, g2 = C.whiten(w1, g1)
    assert w2 is w1 and g2 is g1
    np.testing.assert_allclose(C.eval_r(w1, [0.0]), np.eye(2), atol=1e-12)


def test_psi_examples():
    g = C.gaussian(1, [1.0])
    assert C.psi(g, [0.0]) == 1.0
    x = 0.8
    assert C.psi(g, [x]) == pytest.approx(abs(C.eval_r(g, [x])[0, 0]))
    diag = C.gaussian(1, [1 / math.sqrt(2), 0.5])
    assert C.psi(diag, [1.0]) == pytest.approx(math.exp(-1.0))


def test_check_c1_gaussian():
    rep = C.check_c1(C.gaussian(1, [1.0]), 1, R=10.0)
    assert rep.pair_integrals[0][0] == pytest.approx(V_X1_GAUSSIAN, rel=1e-9)
    assert rep.passed


def test_check_c1_triangular_zero_tail():
    rep = C.check_c1(C.triangular(1, [1.0]), 3, R=2.0)
    assert rep.passed
    assert rep.boundary_max == 0.0 and rep.psi_tail_estimate == 0.0


def test_check_c1_power_law_fails():
    model = C.power_law(1, 0.3)
    rep = C.check_c1(model, 1, R=10.0)
    assert not rep.passed
    # the truncated integral keeps growing with R
    grow = [C.check_c1(model, 1, R=R).pair_integrals[0][0] for R in (10.0, 40.0, 160.0)]
    assert grow[0] < grow[1] < grow[2]


def test_check_c1_preconditions():
    with pytest.raises(UnsupportedDimensionError):
        C.check_c1(C.CovarianceModel(4, 1, lambda x: np.ones((len(x), 1, 1)), 1.0, "flat"), 1)
    with pytest.raises(ModelError):
        C.check_c1(C.gaussian(1, [1.0], mixing=[[2.0]]), 1)


REGISTRY_MODELS = [
    C.gaussian(2, [1.0, 0.5], mixing=[[1.0, 0.2], [0.3, 1.0]]),
    C.exponential(1, [1.0, 2.0]),
    C.triangular(2, [1.0]),
    C.power_law(1, 0.8),
    C.lagged(1, 1.0, [0.7]),
    C.from_spectral(S.hermite_gaussian(1, 3, 0.8)),
    C.from_spectral(S.gaussian_diagonal(1, [1.0, 0.5])),
]


@pytest.mark.parametrize("model", REGISTRY_MODELS, ids=lambda m: m.kind)
def test_gram_matrices_are_psd(model):
    rng = np.random.default_rng(3)
    for _ in range(50):
        k = rng.integers(1, 7)
        pts = rng.uniform(-3, 3, (k, model.n))
        lags = (pts[:, None, :] - pts[None, :, :]).reshape(-1, model.n)
        blocks = C.eval_r(model, lags).reshape(k, k, model.m, model.m)
        gram = blocks.transpose(0, 2, 1, 3).reshape(k * model.m, k * model.m)
        assert np.linalg.eigvalsh(0.5 * (gram + gram.T))[0] >= -1e-8


@pytest.mark.parametrize("model", REGISTRY_MODELS, ids=lambda m: m.kind)
def test_reflection_and_psi_dominance(model):
    x = np.random.default_rng(4).uniform(-3, 3, (40, model.n))
    r, rm = C.eval_r(model, x), C.eval_r(model, -x)
    np.testing.assert_allclose(np.swapaxes(r, 1, 2), rm, atol=1e-12)
    if model.whitened:
        assert np.all(np.abs(r) <= C.psi(model, x)[:, None, None] + 1e-15)
        assert np.all(np.abs(r) <= 1 + 1e-12)


def test_lagged_model_is_not_symmetric():
    r = C.eval_r(C.lagged(1, 1.0, [0.7]), [0.5])
    assert abs(r[0, 1] - r[1, 0]) > 0.1


def test_linear_transform_covariance():
    base = C.gaussian(1, [1.0, 1.0])
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    t = C.linear_transform(base, a)
    np.testing.assert_allclose(C.eval_r(t, [0.0]), a @ a.T)


def test_whitened_functional_same_law():
    # G(xi) and G'(xi') agree pointwise when xi = S xi'
    a = np.array([[1.0, 0.0], [0.6, 0.8]])
    base = C.gaussian(1, [1.0, 1.0], mixing=a)
    G = Functional(lambda x: x[:, 0] ** 2 + x[:, 1], 2)
    w, Gw = C.whiten(base, G)
    sigma = C.eval_r(base, [0.0])
    lam, u = np.linalg.eigh(sigma)
    root = (u * np.sqrt(lam)) @ u.T
    y = np.random.default_rng(0).standard_normal((10, 2))
    np.testing.assert_allclose(Gw(y), G(y @ root.T))
