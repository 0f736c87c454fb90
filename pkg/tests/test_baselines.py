"""Classical fits: against closed forms, scipy, and their own optimality conditions."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from robustlogit.baselines import (
    BaselineConfig,
    classification_error,
    predict,
    predict_batch,
    score_one,
    train_lr,
    train_regularized_lr,
)
from robustlogit.data import Dataset, generate_synthetic, one_hot_matrix
from robustlogit.formulation import ModelParams, empirical_log_loss


def numeric_dataset(X, y):
    X = np.asarray(X, dtype=float)
    return Dataset(X=X.reshape(len(X), -1), Z=np.zeros((len(X), 0), dtype=np.int64),
                   y=np.asarray(y, dtype=float), cardinalities=())


def design_matrix(ds):
    cols = [np.ones((ds.N, 1)), ds.X]
    if ds.m:
        cols.append(one_hot_matrix(ds.Z, ds.cardinalities))
    return np.hstack(cols)


def mean_log_loss(w, D, y):
    t = -y * (D @ w)
    return float(np.mean(np.logaddexp(0.0, t)))


def mean_log_loss_grad(w, D, y):
    t = -y * (D @ w)
    return D.T @ (-y * expit(t)) / len(y)


def test_antisymmetric_pair_gives_log2():
    """Two mirrored observations force the zero model; the loss is log 2."""
    ds = numeric_dataset([[1.0], [1.0]], [1.0, -1.0])
    params = train_lr(ds)
    assert empirical_log_loss(params, ds) == pytest.approx(math.log(2.0), abs=1e-6)
    assert abs(params.beta0) < 1e-4
    assert abs(params.beta_num[0]) < 1e-4


def test_separable_data_warns_about_the_box():
    ds = numeric_dataset([[1.0], [2.0]], [1.0, 1.0])
    with pytest.warns(UserWarning, match="box bound"):
        params = train_lr(ds)
    # the loss is flat at this scale; the fit is effectively unbounded
    top = max(abs(params.beta0), float(np.max(np.abs(params.beta_num))))
    assert top > 100.0
    assert empirical_log_loss(params, ds) < 1e-8


def test_balanced_symmetric_data_centers_the_intercept():
    # invariant under negating features and labels jointly, and the large
    # points disagree with the small ones, so the problem is not separable
    X = [[0.5], [-0.5], [3.0], [-3.0]]
    y = [1.0, -1.0, -1.0, 1.0]
    params = train_lr(numeric_dataset(X, y))
    assert abs(params.beta0) < 1e-5


def test_matches_scipy_quasi_newton():
    ds, _ = generate_synthetic(60, 1, seed=[77, 60, 1, 0])
    params = train_lr(ds)
    D = design_matrix(ds)
    ref = minimize(mean_log_loss, np.zeros(D.shape[1]), args=(D, ds.y),
                   jac=mean_log_loss_grad, method="BFGS", tol=1e-12)
    assert empirical_log_loss(params, ds) == pytest.approx(ref.fun, abs=1e-6)
    got = np.concatenate(([params.beta0], params.beta_num, params.beta_cat))
    np.testing.assert_allclose(got, ref.x, atol=1e-3)


def test_regularization_path_is_monotone():
    ds, _ = generate_synthetic(40, 2, seed=[78, 40, 2, 0])
    gammas = (0.0, 0.01, 0.05, 0.1, 0.5, 1.0)
    norms = []
    for gamma in gammas:
        params = train_regularized_lr(ds, gamma)
        norms.append(float(np.sum(np.abs(params.beta_num)) + np.sum(np.abs(params.beta_cat))))
    for before, after in zip(norms, norms[1:]):
        assert after <= before + 1e-6
    assert norms[-1] < norms[0]  # the largest weight visibly shrinks the fit


def test_subgradient_optimality_of_the_lasso_fit():
    ds, _ = generate_synthetic(50, 1, seed=[79, 50, 1, 0])
    gamma = 0.05
    params = train_regularized_lr(ds, gamma)
    D = design_matrix(ds)
    w = np.concatenate(([params.beta0], params.beta_num, params.beta_cat))
    grad = mean_log_loss_grad(w, D, ds.y)
    assert abs(grad[0]) < 1e-4  # intercept is unpenalized
    for g, coef in zip(grad[1:], w[1:]):
        if abs(coef) > 1e-6:
            assert g + gamma * np.sign(coef) == pytest.approx(0.0, abs=1e-4)
        else:
            assert abs(g) <= gamma + 1e-4


def test_column_rescaling_equivariance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 2))
    prob = expit(X @ np.array([1.0, -0.5]))
    y = np.where(rng.uniform(size=40) < prob, 1.0, -1.0)
    ds = numeric_dataset(X, y)
    params = train_lr(ds)
    scaled = Dataset(X=2.0 * ds.X, Z=ds.Z, y=ds.y, cardinalities=ds.cardinalities)
    params2 = train_lr(scaled)
    assert empirical_log_loss(params2, scaled) == pytest.approx(
        empirical_log_loss(params, ds), abs=1e-6)
    np.testing.assert_allclose(params2.beta_num, params.beta_num / 2.0, atol=1e-4)


def test_gamma_zero_is_the_plain_fit():
    ds, _ = generate_synthetic(30, 1, seed=[81, 30, 1, 0])
    plain = train_lr(ds)
    reg = train_regularized_lr(ds, 0.0)
    assert reg.beta0 == plain.beta0
    np.testing.assert_array_equal(reg.beta_num, plain.beta_num)
    np.testing.assert_array_equal(reg.beta_cat, plain.beta_cat)


def test_config_rejects_negative_weight():
    with pytest.raises(ValueError, match="nonnegative"):
        BaselineConfig(gamma=-0.1)


def test_intercept_penalty_flag():
    # nine positives against one negative: the free intercept is large,
    # a heavily penalized one collapses toward zero
    X = [[0.0]] * 10
    y = [1.0] * 9 + [-1.0]
    ds = numeric_dataset(X, y)
    free = train_lr(ds)
    assert free.beta0 == pytest.approx(math.log(9.0), abs=1e-4)
    squeezed = train_regularized_lr(ds, BaselineConfig(gamma=5.0, penalize_intercept=True))
    assert abs(squeezed.beta0) < 1e-6


def test_predict_tie_and_frozen_probability():
    params = ModelParams(0.0, [], [], ())
    label, prob = predict(params, [], [])
    assert label == 1 and prob == 0.5
    label, prob = predict(ModelParams(math.log(3.0), [], [], ()), [], [])
    assert label == 1
    assert prob == pytest.approx(0.75, abs=1e-12)


def test_constant_positive_classifier_error():
    ds = numeric_dataset([[0.0]] * 10, [1.0] * 7 + [-1.0] * 3)
    params = ModelParams(5.0, [0.0], [], ())
    assert classification_error(params, ds) == pytest.approx(0.3)


def test_batch_and_single_predictions_agree():
    ds, _ = generate_synthetic(25, 2, seed=[82, 25, 2, 0])
    params = train_lr(ds)
    batch = predict_batch(params, ds)
    singles = [predict(params, ds.X[i], ds.Z[i])[0] for i in range(ds.N)]
    np.testing.assert_array_equal(batch, np.asarray(singles))
    # score_one agrees with the vectorised scores used by the batch path
    from robustlogit.formulation import scores
    vec = scores(params, ds)
    for i in range(ds.N):
        assert score_one(params, ds.X[i], ds.Z[i]) == pytest.approx(float(vec[i]), abs=1e-12)
