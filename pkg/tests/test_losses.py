import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hipmv import losses
from hipmv.core import FitConfig, HipParams, MultiViewDataset, OutcomeData
from hipmv.losses import (association_loss, gradients, logit, multiclass_loss, multiclass_terms, penalty_value,
                          poisson_loss, total_objective, zip_loss)

from conftest import random_instance


def test_association_exact_fit_is_zero():
    rng = np.random.default_rng(0)
    Z, B = rng.normal(size=(6, 2)), rng.normal(size=(4, 2))
    assert association_loss(Z @ B.T, Z, B) == pytest.approx(0.0, abs=1e-24)


def test_association_scalar():
    assert association_loss(np.array([[2.0]]), np.array([[1.0]]), np.array([[1.0]])) == 1.0


def test_association_brute_force():
    rng = np.random.default_rng(1)
    X, Z, B = rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    total = 0.0
    for i in range(4):
        for j in range(3):
            fitted = sum(Z[i, k] * B[j, k] for k in range(2))
            total += (X[i, j] - fitted) ** 2
    assert association_loss(X, Z, B) == pytest.approx(total, rel=1e-13)


def test_association_shape_mismatch():
    with pytest.raises(ValueError):
        association_loss(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 1)))


def test_penalty_three_four_five():
    pen_G, _ = penalty_value([np.array([[3.0, 4.0]])], [[np.zeros((1, 2))]], 1.0, 1.0, (1,))
    assert pen_G == 5.0


def test_penalty_gamma_zero_view_contributes_nothing():
    rng = np.random.default_rng(2)
    G = [rng.normal(size=(3, 2)), rng.normal(size=(4, 2))]
    Xi = [[rng.normal(size=(3, 2))], [rng.normal(size=(4, 2))]]
    both = penalty_value(G, Xi, 1.3, 0.7, (1, 1))
    first = penalty_value(G[:1], Xi[:1], 1.3, 0.7, (1,))
    masked = penalty_value(G, Xi, 1.3, 0.7, (1, 0))
    assert masked == pytest.approx(first, rel=1e-15)
    assert masked[0] < both[0]


def test_penalty_identical_subgroups_double():
    rng = np.random.default_rng(3)
    G = [rng.normal(size=(3, 2))]
    xi = rng.normal(size=(3, 2))
    one = penalty_value(G, [[xi]], 1.0, 1.0, (1,))[1]
    two = penalty_value(G, [[xi, xi.copy()]], 1.0, 1.0, (1,))[1]
    assert two == pytest.approx(2 * one, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 2**31))
def test_penalty_homogeneous(c, seed):
    rng = np.random.default_rng(seed)
    G = [rng.normal(size=(3, 2))]
    Xi = [[rng.normal(size=(3, 2)), rng.normal(size=(3, 2))]]
    base = np.array(penalty_value(G, Xi, 0.8, 1.7, (1,)))
    scaled = np.array(penalty_value([c * g for g in G], [[c * x for x in Xi[0]]], 0.8, 1.7, (1,)))
    assert np.allclose(scaled, c * base, rtol=1e-12)


def test_multiclass_uniform():
    Y = np.array([[1.0, 0.0]])
    assert multiclass_loss(Y, np.zeros((1, 2)), np.ones((2, 2)), np.zeros(2)) == pytest.approx(math.log(2), rel=1e-15)


def test_multiclass_no_overflow():
    loss, grad = multiclass_terms(np.array([[1.0, 0.0]]), np.array([[1000.0, 0.0]]))
    assert np.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-300)
    assert np.all(np.isfinite(grad))


def _mp_softmax_loss(Y, W):
    mpmath.mp.dps = 50
    total = mpmath.mpf(0)
    for i in range(W.shape[0]):
        ex = [mpmath.exp(mpmath.mpf(float(w))) for w in W[i]]
        norm = mpmath.fsum(ex)
        for j in range(W.shape[1]):
            if Y[i, j]:
                total -= mpmath.log(ex[j] / norm)
    return float(total)


@pytest.mark.parametrize("seed", range(5))
def test_multiclass_extended_precision_oracle(seed):
    rng = np.random.default_rng(seed)
    Z, Theta, beta0 = rng.normal(size=(5, 2)), rng.normal(size=(2, 3)), rng.normal(size=3)
    Y = np.eye(3)[rng.integers(0, 3, size=5)]
    got = multiclass_loss(Y, Z, Theta, beta0)
    assert got == pytest.approx(_mp_softmax_loss(Y, beta0 + Z @ Theta), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_multiclass_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(4, 3))
    Y = np.eye(3)[rng.integers(0, 3, size=4)]
    a, _ = multiclass_terms(Y, W)
    b, _ = multiclass_terms(Y, W + c)
    assert b == pytest.approx(a, rel=1e-10, abs=1e-12)


def _poisson_args(y, t, eta):
    return np.array(y, float), np.array(t, float), np.zeros((len(y), 1)), np.zeros((1, 1)), np.array([eta])


def test_poisson_hand_values():
    assert poisson_loss(*_poisson_args([0], [1], 0.0)) == pytest.approx(1.0, abs=1e-15)
    assert poisson_loss(*_poisson_args([2], [1], 0.0)) == pytest.approx(1.0 + math.log(2), rel=1e-15)
    one = poisson_loss(*_poisson_args([0], [1], 0.3))
    two = poisson_loss(*_poisson_args([0], [2], 0.3))
    assert two == 2 * one


@pytest.mark.parametrize("seed", range(5))
def test_poisson_term_by_term(seed):
    rng = np.random.default_rng(seed)
    n = 9
    y, t = rng.poisson(3.0, size=n).astype(float), rng.uniform(0.5, 2, size=n)
    Z, Theta, beta0 = rng.normal(size=(n, 2)), rng.normal(size=(2, 1)), rng.normal(size=1)
    total = 0.0
    for i in range(n):
        eta = beta0[0] + Z[i] @ Theta[:, 0]
        total += -y[i] * (math.log(t[i]) + eta) + t[i] * math.exp(eta) + math.lgamma(y[i] + 1)
    assert poisson_loss(y, t, Z, Theta, beta0) == pytest.approx(total, rel=1e-12)


def _zip_one(y, t, eta, tau):
    return zip_loss(*_poisson_args([y], [t], eta)[:2], np.zeros((1, 1)), np.zeros((1, 1)), np.array([eta]), tau)


def test_zip_hand_value():
    # y=0, lambda=1, tau=0.5
    assert _zip_one(0, 1.0, 0.0, 0.5) == pytest.approx(-math.log(1 + math.exp(-1)) + math.log(2), abs=1e-12)
    assert _zip_one(0, 1.0, 0.0, 0.5) == pytest.approx(0.379885, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_zip_tau_to_zero_is_poisson(seed):
    rng = np.random.default_rng(seed)
    n = 12
    y, t = rng.poisson(2.0, size=n).astype(float), rng.uniform(0.5, 2, size=n)
    # moderate means: the limit needs exp(-lambda) >> tau at every zero
    Z, Theta, beta0 = rng.normal(size=(n, 2)), rng.normal(scale=0.1, size=(2, 1)), np.array([0.0])
    assert zip_loss(y, t, Z, Theta, beta0, 1e-8) == pytest.approx(poisson_loss(y, t, Z, Theta, beta0), abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_zip_pmf_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 15
    tau = rng.uniform(0.05, 0.9)
    y = (rng.poisson(2.5, size=n) * (rng.random(n) > tau)).astype(float)
    t = rng.uniform(0.5, 2.0, size=n)
    Z, Theta, beta0 = rng.normal(size=(n, 2)), rng.normal(scale=0.5, size=(2, 1)), rng.normal(size=1)
    lam = t * np.exp(beta0[0] + Z @ Theta[:, 0])
    pmf = np.where(y == 0, tau, 0.0) + (1 - tau) * stats.poisson.pmf(y, lam)
    oracle = -np.sum(np.log(pmf))
    assert zip_loss(y, t, Z, Theta, beta0, tau) == pytest.approx(oracle, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(-5, 3), st.floats(0.1, 5))
def test_zip_zero_logit_equals_mixture(tau, eta, t):
    c = logit(tau)
    lam = t * math.exp(eta)
    logit_form = -math.log(math.exp(c) + math.exp(-lam)) + math.log1p(math.exp(c))
    mixture = -math.log(tau + (1 - tau) * math.exp(-lam))
    assert _zip_one(0, t, eta, tau) == pytest.approx(mixture, rel=1e-10)
    assert logit_form == pytest.approx(mixture, rel=1e-10)


def test_zip_rejects_bad_tau():
    with pytest.raises(ValueError):
        _zip_one(0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        _zip_one(0, 1.0, 0.0, 0.0)


@pytest.mark.parametrize("family", ["multiclass", "poisson", "zip"])
def test_losses_permutation_invariant(family):
    data, params, config = random_instance(family, 4)
    perm = np.random.default_rng(0).permutation(15)
    out = data.outcome
    permuted = MultiViewDataset(data.views, data.subgroups, data.X,
                                out.subset_rows([perm, np.arange(15)]))
    params2 = params.copy()
    params2.Z[0] = params.Z[0][perm]
    a = losses.prediction_loss(out, params)
    b = losses.prediction_loss(permuted.outcome, params2)
    assert b == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("family", ["multiclass", "poisson", "zip"])
def test_total_objective_resum(family):
    data, params, config = random_instance(family, 7)
    br = total_objective(data, params, config)
    assoc = sum(np.sum((data.X[d][s] - params.Z[s] @ (params.G[d] * params.Xi[d][s]).T) ** 2)
                for d in range(2) for s in range(2))
    pen_G = config.lambda_G * sum(np.linalg.norm(g, axis=1).sum() for g in params.G)
    pen_Xi = config.lambda_xi * sum(np.linalg.norm(x, axis=1).sum() for row in params.Xi for x in row)
    assert br.association_term == pytest.approx(assoc, rel=1e-12)
    assert br.penalty_G == pytest.approx(pen_G, rel=1e-12)
    assert br.penalty_Xi == pytest.approx(pen_Xi, rel=1e-12)
    assert br.total == pytest.approx(br.prediction_term + assoc + pen_G + pen_Xi, rel=1e-12)


def test_total_objective_lambda_scaling():
    data, params, config = random_instance("poisson", 8)
    a = total_objective(data, params, config)
    b = total_objective(data, params, config.replace(lambda_G=2 * config.lambda_G))
    assert b.penalty_G == pytest.approx(2 * a.penalty_G, rel=1e-15)
    assert (b.prediction_term, b.association_term, b.penalty_Xi) == (a.prediction_term, a.association_term,
                                                                      a.penalty_Xi)


def test_total_objective_zero_data():
    data, params, config = random_instance("poisson", 9)
    for row in data.X:
        for x in row:
            x[:] = 0.0
    zero = HipParams([np.zeros_like(z) for z in params.Z], params.G, params.Xi, params.Theta, params.beta0)
    br = total_objective(data, zero, config.replace(lambda_G=1e-3, lambda_xi=1e-3))
    assert br.association_term == 0.0
    assert br.total == pytest.approx(br.prediction_term + br.penalty_G + br.penalty_Xi, rel=1e-15)


def test_gradient_G_zero_at_exact_fit_without_penalty():
    data, params, config = random_instance("poisson", 10)
    for d in range(2):
        for s in range(2):
            data.X[d][s] = params.Z[s] @ params.B(d, s).T
    g = gradients(data, params, config.replace(gamma=(0, 1)), ("G", 0))
    assert np.all(g == 0.0) or np.max(np.abs(g)) < 1e-12


def test_zip_gradient_limit_matches_poisson():
    data, params, config = random_instance("zip", 11)
    params.tau = 1e-8
    pois = MultiViewDataset(data.views, data.subgroups, data.X,
                            OutcomeData("poisson", data.outcome.values, data.outcome.offsets))
    for block in [("Z", 0), "ThetaBeta"]:
        gz = gradients(data, params, config, block)
        gp = gradients(pois, params, config.replace(family="poisson"), block)
        gz, gp = (np.concatenate([a.ravel() for a in g]) if isinstance(g, tuple) else g for g in (gz, gp))
        assert np.allclose(gz, gp, atol=1e-5)


def test_clip_counter():
    before = losses.exp_clip_count()
    v = losses.clipped_exp(np.array([800.0, 0.0, -900.0]))
    assert np.isfinite(v).all()
    assert losses.exp_clip_count() == before + 2
