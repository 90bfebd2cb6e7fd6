import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import sparse

from qning.objective import (CompositeObjective, Dataset, EvalCounter, NoCertificateError,
                             Regularizer, component_grad, elastic_net, full_value_grad, l1, l2,
                             no_reg, optimality_gap_certificate, prox)

from oracles import coordinate_descent, sub_value


def single(a, b, loss, reg=None):
    return CompositeObjective(Dataset(np.array([a], float), np.array([b], float)), loss,
                              reg or no_reg())


def random_objective(rng, n, d, loss, reg, normalized=True):
    A = rng.standard_normal((n, d))
    if normalized:
        A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = np.sign(rng.standard_normal(n)) if loss == "logistic" else rng.standard_normal(n)
    return CompositeObjective(Dataset(A, b), loss, reg)


# -- full_value_grad ---------------------------------------------------------

def test_squared_residual_zero():
    val, grad = full_value_grad(single((1, 0), 0, "squared"), np.zeros(2))
    assert val == 0.0
    np.testing.assert_array_equal(grad, [0.0, 0.0])


def test_logistic_at_origin():
    val, grad = full_value_grad(single((1, 0), 1, "logistic"), np.zeros(2))
    assert val == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, [-0.5, 0.0], atol=1e-15)


def test_squared_unit_residual():
    val, grad = full_value_grad(single((1, 0), 1, "squared"), np.array([2.0, 5.0]))
    assert val == pytest.approx(0.5)
    np.testing.assert_allclose(grad, [1.0, 0.0])


def test_full_grad_counts_one_pass():
    rng = np.random.default_rng(0)
    obj = random_objective(rng, 7, 3, "logistic", no_reg())
    counter = EvalCounter(obj.n)
    full_value_grad(obj, np.zeros(3), counter)
    assert counter.grad_components == 7 and counter.passes == 1.0


# -- component_grad ----------------------------------------------------------

def test_component_exact_fit():
    obj = single((0, 1), 2, "squared")
    np.testing.assert_array_equal(component_grad(obj, 0, np.array([3.0, 2.0])), [0.0, 0.0])


def test_component_logistic_sign_flip():
    obj = single((1, 0), -1, "logistic")
    np.testing.assert_allclose(component_grad(obj, 0, np.zeros(2)), [0.5, 0.0], atol=1e-15)


def test_component_out_of_range():
    obj = single((1, 0), 1, "squared")
    with pytest.raises(IndexError):
        component_grad(obj, 1, np.zeros(2))
    with pytest.raises(IndexError):
        component_grad(obj, -1, np.zeros(2))


def test_component_counter():
    obj = single((1, 0), 1, "squared")
    counter = EvalCounter(1)
    component_grad(obj, 0, np.zeros(2), counter)
    assert counter.grad_components == 1


@pytest.mark.parametrize("loss", ["logistic", "squared"])
@pytest.mark.parametrize("fmt", ["dense", "csr"])
def test_component_average_equals_full(loss, fmt):
    rng = np.random.default_rng(3)
    obj = random_objective(rng, 40, 6, loss, no_reg())
    if fmt == "csr":
        obj = CompositeObjective(Dataset(sparse.csr_matrix(obj.dataset.features),
                                         obj.dataset.labels), loss)
    x = rng.standard_normal(6)
    avg = np.mean([component_grad(obj, i, x) for i in range(obj.n)], axis=0)
    _, grad = full_value_grad(obj, x)
    np.testing.assert_allclose(avg, grad, atol=1e-12 * obj.n)


@pytest.mark.parametrize("loss", ["logistic", "squared"])
def test_finite_differences(loss):
    rng = np.random.default_rng(11)
    obj = random_objective(rng, 30, 5, loss, no_reg())
    h = 1e-6
    for _ in range(10):
        x = rng.standard_normal(5)
        _, grad = full_value_grad(obj, x)
        fd = np.array([(obj.smooth_value(x + h * e) - obj.smooth_value(x - h * e)) / (2 * h)
                       for e in np.eye(5)])
        assert np.linalg.norm(fd - grad) <= 1e-5 * max(np.linalg.norm(grad), 1e-8)


def test_lipschitz_bounds_on_normalized_rows():
    rng = np.random.default_rng(5)
    mu = 0.01
    log = random_objective(rng, 20, 4, "logistic", l2(mu))
    sq = random_objective(rng, 20, 4, "squared", elastic_net(0.1, mu))
    assert 0 < log.L <= 0.25 + mu + 1e-15
    assert 0 < sq.L <= 1.0 + mu + 1e-15
    assert log.mu == mu and sq.mu == mu


def test_value_is_finite_far_away():
    obj = single((1, 0), 1, "logistic", l2(0.1))
    assert math.isfinite(obj.value(np.array([-1e6, 3.0])))


# -- prox --------------------------------------------------------------------

def test_prox_soft_threshold():
    np.testing.assert_array_equal(prox(l1(1.0), np.array([2.0, -0.5]), 1.0), [1.0, 0.0])


def test_prox_l2_shrink():
    np.testing.assert_array_equal(prox(l2(1.0), np.array([4.0]), 1.0), [2.0])


def test_prox_elastic_net():
    np.testing.assert_array_equal(prox(elastic_net(1.0, 1.0), np.array([3.0]), 1.0), [1.0])


def test_prox_none_is_identity():
    y = np.array([1.5, -2.0])
    np.testing.assert_array_equal(prox(no_reg(), y, 0.3), y)


def test_prox_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        prox(l1(1.0), np.ones(2), 0.0)


def test_regularizer_validation():
    with pytest.raises(ValueError):
        Regularizer("l1", lam=1.0, mu=1.0)
    with pytest.raises(ValueError):
        l2(-1.0)
    with pytest.raises(ValueError):
        Regularizer("group")


regs = st.sampled_from([no_reg(), l1(0.3), l2(0.7), elastic_net(0.2, 1.5), l1(2.0)])
vecs = arrays(np.float64, 5, elements=st.floats(-10, 10, allow_nan=False))
steps = st.floats(1e-3, 10.0)


@settings(max_examples=200, deadline=None)
@given(regs, vecs, vecs, steps)
def test_prox_nonexpansive(reg, y1, y2, step):
    p1, p2 = prox(reg, y1, step), prox(reg, y2, step)
    assert np.linalg.norm(p1 - p2) <= np.linalg.norm(y1 - y2) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(regs, vecs, vecs, steps)
def test_prox_optimality(reg, y, w, step):
    p = prox(reg, y, step)

    def model(v):
        return step * reg.value(v) + 0.5 * float((v - y) @ (v - y))

    assert model(p) <= model(w) + 1e-9 * (1 + abs(model(w)))
    assert model(p) <= model(p + 1e-4 * (w - p)) + 1e-12 * (1 + abs(model(p)))


# -- certificate -------------------------------------------------------------

def _half_square():
    # f(w) = 0.5 w^2 as the l2 term of an objective with zero data
    return CompositeObjective(Dataset(np.zeros((1, 1)), np.zeros(1)), "squared", l2(1.0))


def test_certificate_zero_at_minimizer():
    assert optimality_gap_certificate(_half_square(), np.zeros(1)) == 0.0


def test_certificate_quadratic_value():
    cert = optimality_gap_certificate(_half_square(), np.array([2.0]))
    assert cert == pytest.approx(2.0)
    assert cert >= 0.5 * 2.0 ** 2


def test_certificate_needs_strong_convexity():
    obj = single((1, 0), 1, "squared", l1(0.1))
    with pytest.raises(NoCertificateError):
        optimality_gap_certificate(obj, np.zeros(2))


def test_certificate_needs_center():
    with pytest.raises(ValueError):
        optimality_gap_certificate(_half_square(), np.zeros(1), kappa=1.0)


def test_certificate_lasso_subproblems_sound():
    rng = np.random.default_rng(7)
    for trial in range(20):
        n, d = rng.integers(5, 30), rng.integers(2, 12)
        obj = random_objective(rng, n, d, "squared", l1(10 ** rng.uniform(-3, -0.5)))
        kappa = 10 ** rng.uniform(-2, 0.5)
        center = rng.standard_normal(d)
        w_star = coordinate_descent(obj, kappa, center)
        h_star = sub_value(obj, w_star, kappa, center)
        for scale in (1e-3, 0.1, 1.0):
            w = w_star + scale * rng.standard_normal(d)
            if trial % 2:
                w[rng.random(d) < 0.5] = 0.0
            gap = sub_value(obj, w, kappa, center) - h_star
            cert = optimality_gap_certificate(obj, w, kappa, center)
            assert cert >= gap - 1e-12, (trial, scale)


def test_certificate_logistic_soundness():
    from oracles import newton_logistic
    rng = np.random.default_rng(2)
    obj = random_objective(rng, 50, 4, "logistic", l2(0.05))
    w_star = newton_logistic(obj)
    h_star = obj.value(w_star)
    for _ in range(20):
        w = w_star + rng.standard_normal(4)
        assert optimality_gap_certificate(obj, w) >= obj.value(w) - h_star - 1e-12


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf]]), np.ones(1))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.ones(3))
