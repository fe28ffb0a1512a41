import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from orthofd.loss import (LossWeights, kl_term, nll_term, orthogonality_term, smoothness_term,
                          total_loss, total_loss_gradients)
from orthofd.model import EncodedBatch, forward_batch
from orthofd.numerics import finite_difference_gradient, gradient_relative_error

from toys import random_toy, toy_2_2_2

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)

finite = st.floats(-5, 5, allow_nan=False)
positive = st.floats(0.05, 5, allow_nan=False)


def batch(elements, rows=st.integers(1, 6), cols=st.integers(1, 5)):
    return st.tuples(rows, cols).flatmap(lambda s: arrays(np.float64, s, elements=elements))


# -- nll ------------------------------------------------------------------------

def test_nll_zero_residual_unit_sigma():
    y = np.full((3, 16), 2.0)
    v = nll_term(y, y - 0.5, np.full_like(y, 0.5), np.ones_like(y))
    assert v == pytest.approx(16 * HALF_LOG_2PI, abs=1e-12)
    assert v == pytest.approx(14.70, abs=0.005)


def test_nll_unit_residual_adds_half():
    y = np.zeros((1, 16))
    base = nll_term(y, y, y, np.ones_like(y))
    y2 = y.copy()
    y2[0, 3] = 1.0
    assert nll_term(y2, y, y, np.ones_like(y)) == pytest.approx(base + 0.5, abs=1e-12)


def test_nll_matches_density_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        shape = (int(rng.integers(1, 8)), int(rng.integers(1, 6)))
        y, d, m = rng.normal(size=shape), rng.normal(size=shape), rng.normal(size=shape)
        s = rng.uniform(0.1, 3, size=shape)
        oracle = -stats.norm.logpdf(y, loc=d + m, scale=s).sum(axis=1).mean()
        assert abs(nll_term(y, d, m, s) - oracle) < 1e-10


def test_nll_rejects_nonpositive_sigma():
    z = np.zeros((2, 2))
    with pytest.raises(ValueError):
        nll_term(z, z, z, z)


# -- smoothness -----------------------------------------------------------------

def test_smoothness_examples():
    assert smoothness_term(np.full((7, 3), 1.7)) == 0.0
    assert smoothness_term(np.array([[0.0, 0.0], [1.0, 0.0]])) == 1.0
    assert smoothness_term(np.array([[0.0], [1.0], [3.0]])) == 2.5
    assert smoothness_term(np.ones((1, 4))) == 0.0


def test_smoothness_is_order_sensitive_others_are_not():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(8, 3))
    enc = EncodedBatch(phi_d=np.cumsum(rng.normal(size=(8, 3)), axis=0), mu_s=rng.normal(size=(8, 3)),
                       sigma_s=rng.uniform(0.5, 2, (8, 3)), noise=np.zeros((8, 3)),
                       phi_s=rng.normal(size=(8, 3)), y_hat=np.zeros((8, 3)))
    perm = rng.permutation(8)
    enc_p = EncodedBatch(*(getattr(enc, f)[perm] for f in ("phi_d", "mu_s", "sigma_s", "noise", "phi_s", "y_hat")))
    a = total_loss(enc, y, LossWeights())
    b = total_loss(enc_p, y[perm], LossWeights())
    for term in ("nll", "kl", "orthogonality"):
        assert getattr(a, term) == pytest.approx(getattr(b, term), rel=1e-12)
    assert a.smoothness != pytest.approx(b.smoothness, rel=1e-3)


# -- kl ---------------------------------------------------------------------------

def test_kl_examples():
    assert kl_term(np.zeros((2, 5)), np.ones((2, 5))) == 0.0
    assert kl_term(np.ones((1, 1)), np.ones((1, 1))) == pytest.approx(0.5, abs=1e-15)


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(2)
    for _ in range(3):
        mu, sigma = rng.normal(size=3), rng.uniform(0.3, 2.0, size=3)
        x = mu + sigma * rng.standard_normal((200_000, 3))
        log_ratio = (stats.norm.logpdf(x, mu, sigma) - stats.norm.logpdf(x)).sum(axis=1)
        se = log_ratio.std(ddof=1) / np.sqrt(len(log_ratio))
        assert abs(kl_term(mu, sigma) - log_ratio.mean()) < 3 * se


# -- orthogonality ----------------------------------------------------------------

def test_orthogonality_examples():
    assert orthogonality_term(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]])) == 0.0
    assert orthogonality_term(np.array([[1.0, 2.0]]), np.array([[-2.0, -4.0]])) == pytest.approx(1.0, abs=1e-12)
    assert orthogonality_term(np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]])) == pytest.approx(0.5, abs=1e-12)
    assert orthogonality_term(np.zeros((1, 3)), np.ones((1, 3))) == 0.0


def test_orthogonality_dot_form():
    a, b = np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[3.0, -1.0], [2.0, 2.0]])
    assert orthogonality_term(a, b, form="dot") == pytest.approx((1.0 + 2.0) / 2)


# -- properties ------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(batch(finite), st.data())
def test_term_ranges(phi_d, data):
    phi_s = data.draw(arrays(np.float64, phi_d.shape, elements=finite))
    sigma = data.draw(arrays(np.float64, phi_d.shape, elements=positive))
    assert smoothness_term(phi_d) >= 0
    assert kl_term(phi_s, sigma) >= -1e-12
    o = orthogonality_term(phi_d, phi_s)
    assert 0.0 <= o <= 1.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(batch(finite), st.data())
def test_kl_zero_only_at_standard_normal(mu, data):
    sigma = data.draw(arrays(np.float64, mu.shape, elements=positive))
    kl = kl_term(mu, sigma)
    at_target = np.allclose(mu, 0, atol=1e-7) and np.allclose(sigma, 1, atol=1e-7)
    if at_target:
        assert kl < 1e-12
    else:
        assert kl > 1e-15
    assert kl_term(np.zeros_like(mu), np.ones_like(mu)) < 1e-12


# -- totals and gradients --------------------------------------------------------

def test_total_zero_weights():
    params, y, e = toy_2_2_2(1)
    enc = forward_batch(params, y, e)
    w = LossWeights(0, 0, 0, 0)
    assert total_loss(enc, y, w).total == 0.0
    grads, _ = total_loss_gradients(params, y, e, w)
    assert all(np.all(g == 0) for g in grads.values())


def test_total_composed_identity():
    d = 16
    y = np.full((5, d), 2.0)
    phi_d = np.zeros((5, d))
    phi_d[:, 0] = 3.0
    enc = EncodedBatch(phi_d=phi_d, mu_s=np.zeros((5, d)), sigma_s=np.ones((5, d)), noise=np.zeros((5, d)),
                       phi_s=np.zeros((5, d)), y_hat=phi_d)
    w = LossWeights(orthogonality=2.0, nll=1.5, smoothness=3.0, kl=0.5)
    # zero residual needs y = phi_d + mu_s
    enc.phi_d = y.copy()
    enc.phi_s = np.zeros((5, d))
    b = total_loss(enc, y, w)
    assert b.total == pytest.approx(1.5 * d * HALF_LOG_2PI, abs=1e-12)


def test_total_is_weighted_sum():
    params, y, e = random_toy(3)
    enc = forward_batch(params, y, e)
    w = LossWeights(orthogonality=0.7, nll=1.3, smoothness=2.1, kl=0.4)
    b = total_loss(enc, y, w)
    manual = (0.7 * orthogonality_term(enc.phi_d, enc.phi_s) + 1.3 * nll_term(y, enc.phi_d, enc.mu_s, enc.sigma_s)
              + 2.1 * smoothness_term(enc.phi_d) + 0.4 * kl_term(enc.mu_s, enc.sigma_s))
    assert b.total == manual or abs(b.total - manual) <= 1e-12 * abs(manual)


SINGLE_TERMS = {
    "orthogonality": LossWeights(1, 0, 0, 0),
    "nll": LossWeights(0, 1, 0, 0),
    "smoothness": LossWeights(0, 0, 1, 0),
    "kl": LossWeights(0, 0, 0, 1),
    "total": LossWeights(0.8, 1.1, 1.7, 0.6),
    "dot": LossWeights(orthogonality_form="dot"),
    "mean_source": LossWeights(orthogonality_source="mean"),
}


def fd_check(params, y, e, w):
    grads, _ = total_loss_gradients(params, y, e, w)
    fd = finite_difference_gradient(lambda: total_loss(forward_batch(params, y, e), y, w).total,
                                    params.blocks(), 1e-5)
    return gradient_relative_error(grads, fd)


@pytest.mark.parametrize("term", sorted(SINGLE_TERMS))
@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(term, seed):
    params, y, e = random_toy(seed)
    assert fd_check(params, y, e, SINGLE_TERMS[term]) < 1e-4


def test_gradient_toy_2_2_2():
    params, y, e = toy_2_2_2()
    assert fd_check(params, y, e, LossWeights()) < 1e-4


def test_smoothness_only_constant_batch_zero_gradient():
    params, _, _ = random_toy(7)
    d = params.shared[0].n_in
    y = np.tile(np.linspace(-1, 1, d), (6, 1))
    grads, b = total_loss_gradients(params, y, np.zeros_like(y), LossWeights(0, 0, 1, 0))
    assert b.smoothness == 0.0
    assert all(np.all(g == 0) for g in grads.values())
