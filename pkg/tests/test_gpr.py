import math

import numpy as np
import pytest

from yieldopt import gpr
from yieldopt.gpr import DuplicateInputError, GprConfig, fit, predict, rbf_kernel, update

from oracles import dense_gpr_predict


def random_set(n, dim=16, seed=0, scale=1.0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    X = rng.random((n, dim)) * scale
    q = np.sin(X.sum(axis=1)) + 0.2 * X[:, 0]
    return X, q


def test_kernel_at_zero_distance():
    y = np.arange(16.0)
    assert rbf_kernel(y, y, zeta=2.5, l=1.0) == pytest.approx(2.5**2, rel=1e-15)


def test_kernel_direct_value():
    y = np.zeros(16)
    y2 = np.zeros(16)
    y2[0] = math.sqrt(2.0)
    assert rbf_kernel(y, y2, zeta=1.0, l=1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_kernel_decay_and_symmetry():
    rng = np.random.Generator(np.random.Philox(key=3))
    for _ in range(20):
        a, b = rng.random(16), rng.random(16)
        z, l = rng.uniform(0.5, 3.0), rng.uniform(0.2, 2.0)
        assert rbf_kernel(a, b, z, l) == rbf_kernel(b, a, z, l)
    far = np.zeros(16)
    far[0] = 10.0
    assert rbf_kernel(np.zeros(16), far, 1.0, 1.0) <= math.exp(-50.0)


def test_kernel_rejects_nonpositive_hyperparameters():
    y = np.zeros(16)
    with pytest.raises(ValueError):
        rbf_kernel(y, y, 0.0, 1.0)
    with pytest.raises(ValueError):
        rbf_kernel(y, y, 1.0, -1.0)


def test_constant_outputs_predict_constant():
    X, _ = random_set(8, seed=1)
    model = fit(X, np.full(8, 3.25))
    rng = np.random.Generator(np.random.Philox(key=9))
    for _ in range(10):
        mean, std = model.predict(rng.random(16))
        assert mean == pytest.approx(3.25, abs=1e-9)
        assert std <= model.zeta + 1e-12


def test_predict_matches_dense_oracle():
    for seed in range(25):
        n = 3 + seed % 8
        X, q = random_set(n, seed=seed)
        model = fit(X, q)
        rng = np.random.Generator(np.random.Philox(key=1000 + seed))
        Y_star = rng.random((12, 16))
        mean, std = model.predict_batch(Y_star)
        o_mean, o_std = dense_gpr_predict(model, Y_star)
        scale = max(1.0, float(np.abs(q).max()))
        assert np.max(np.abs(mean - o_mean)) <= 1e-8 * scale
        assert np.max(np.abs(std - o_std)) <= 1e-6 * max(1.0, model.zeta)


def test_interpolates_training_points():
    X, q = random_set(10, seed=4)
    model = fit(X, q)
    mean, std = model.predict_batch(X)
    assert np.max(np.abs(mean - q)) <= 1e-6
    assert np.all(std <= 1e-3 * model.zeta)


def test_prior_reversion_far_from_data():
    X, q = random_set(6, seed=5, scale=0.5)
    model = fit(X, q, GprConfig(zeta=1.7, length_scale=0.8))
    far = np.full(16, 100.0)
    mean, std = model.predict(far)
    assert mean == pytest.approx(model.prior_mean, abs=1e-6 * model.zeta)
    assert std == pytest.approx(model.zeta, abs=1e-6 * model.zeta)


def test_two_point_hand_case():
    X = np.zeros((2, 16))
    X[1, 0] = 1.0
    q = np.array([1.0, 3.0])
    model = fit(X, q, GprConfig(zeta=2.0, length_scale=1.0))
    y_star = np.zeros(16)
    y_star[0] = 0.5
    mean, std = model.predict(y_star)
    o_mean, o_std = dense_gpr_predict(model, y_star[np.newaxis, :])
    assert mean == pytest.approx(o_mean[0], rel=1e-10)
    assert std == pytest.approx(o_std[0], rel=1e-6)


def test_fit_requires_two_points():
    with pytest.raises(ValueError):
        fit(np.zeros((1, 16)), np.array([1.0]))


def test_fit_rejects_duplicates():
    X = np.zeros((3, 16))
    X[1, 0] = 1.0  # rows 0 and 2 identical
    with pytest.raises(DuplicateInputError):
        fit(X, np.array([1.0, 2.0, 1.0]))


def test_update_interpolates_new_point():
    X, q = random_set(8, seed=6)
    model = fit(X, q)
    y_new = np.full(16, 0.5)
    model2 = update(model, y_new, -2.0)
    mean, _ = model2.predict(y_new)
    assert mean == pytest.approx(-2.0, abs=1e-6)


def test_update_equals_refit(tmp_path):
    for seed in range(20):
        X, q = random_set(10, seed=100 + seed)
        cfg = GprConfig(zeta=1.5, length_scale=0.9, refresh_every=0)
        model = fit(X, q, cfg)
        rng = np.random.Generator(np.random.Philox(key=200 + seed))
        seq_len = 1 + seed % 4
        for _ in range(seq_len):
            y_new = rng.random(16) * 1.5
            model = update(model, y_new, float(np.sin(y_new.sum())))
        refit_cfg = GprConfig(
            zeta=1.5, length_scale=0.9, center=model.center, scale=model.scale
        )
        refit = fit(model.train_inputs, model.train_outputs, refit_cfg)
        probes = rng.random((100, 16)) * 1.5
        m1, s1 = model.predict_batch(probes)
        m2, s2 = refit.predict_batch(probes)
        scale = max(1.0, float(np.abs(q).max()))
        assert np.max(np.abs(m1 - m2)) <= 1e-8 * scale
        assert np.max(np.abs(s1 - s2)) <= 1e-8 * max(1.0, model.zeta)


def test_update_preserves_old_predictions_far_away():
    X, q = random_set(10, seed=7, scale=0.6)
    model = fit(X, q, GprConfig(zeta=1.0, length_scale=0.5, refresh_every=0))
    before, _ = model.predict_batch(X)
    far = np.full(16, 50.0)
    model2 = update(model, far, 9.9)
    after, _ = model2.predict_batch(X)
    assert np.max(np.abs(after - before)) <= 1e-5


def test_update_rejects_near_duplicate():
    X, q = random_set(5, seed=8)
    model = fit(X, q)
    with pytest.raises(DuplicateInputError):
        update(model, X[2], q[2])


def test_hyperparameter_refresh_cadence():
    X, q = random_set(8, seed=9)
    model = fit(X, q, GprConfig(refresh_every=3))
    rng = np.random.Generator(np.random.Philox(key=31))
    for i in range(1, 4):
        model = update(model, rng.random(16) * 2.0, float(rng.random()))
    # third update triggered a refit, resetting the counter
    assert model.updates_since_refit == 0


def test_output_shift_invariance():
    X, q = random_set(9, seed=10)
    cfg = GprConfig(zeta=1.2, length_scale=0.7)
    m1 = fit(X, q, cfg)
    m2 = fit(X, q + 5.0, cfg)
    rng = np.random.Generator(np.random.Philox(key=12))
    probes = rng.random((30, 16))
    a_mean, a_std = m1.predict_batch(probes)
    b_mean, b_std = m2.predict_batch(probes)
    assert np.allclose(b_mean - a_mean, 5.0, atol=1e-9)
    assert np.allclose(a_std, b_std, atol=1e-12)


def test_std_smaller_at_training_point_than_midpoint():
    X = np.zeros((2, 16))
    X[1, 0] = 2.0
    model = fit(X, np.array([0.0, 1.0]), GprConfig(zeta=1.0, length_scale=0.5))
    _, std_train = model.predict(X[0])
    mid = np.zeros(16)
    mid[0] = 1.0
    _, std_mid = model.predict(mid)
    assert std_train <= std_mid


def test_kernel_submatrix_positive_definite():
    rng = np.random.Generator(np.random.Philox(key=77))
    X = rng.random((12, 16))
    q = rng.random(12)
    model = fit(X, q)
    assert np.all(np.diag(model.factor) > 0)


def test_serialization_round_trip(tmp_path):
    X, q = random_set(7, seed=13)
    model = fit(X, q)
    path = tmp_path / "model.npz"
    model.save(path)
    loaded = gpr.load(path)
    probes = np.random.Generator(np.random.Philox(key=14)).random((20, 16))
    m1, s1 = model.predict_batch(probes)
    m2, s2 = loaded.predict_batch(probes)
    assert np.allclose(m1, m2, atol=1e-12)
    assert np.allclose(s1, s2, atol=1e-12)


def test_module_level_predict_delegates():
    X, q = random_set(5, seed=15)
    model = fit(X, q)
    assert predict(model, X[0]) == model.predict(X[0])
