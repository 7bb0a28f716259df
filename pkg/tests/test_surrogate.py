from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snapjump.surrogate import (
    Standardizer,
    SurrogateModel,
    TrainConfig,
    init_model,
    mae_and_gradients,
    split_indices,
    train,
)

LO = np.array([0.01, 0.1, 0.3, 0.1])
HI = np.array([0.19, 0.3, 2.0, 0.6])


def small_model(seed=0, sizes=(4, 6, 5, 7, 2)):
    rng = np.random.default_rng(seed)
    std = Standardizer(rng.uniform(0, 1, 4), rng.uniform(0.1, 1.0, 4))
    m = init_model(sizes, std, rng)
    m.biases = [rng.normal(0, 0.3, b.shape) for b in m.biases]
    return m


def exact_forward(model, p):
    """Forward pass in rational arithmetic."""
    a = [(Fraction(float(x)) - Fraction(float(mu))) / Fraction(float(s))
         for x, mu, s in zip(p, model.standardizer.mean, model.standardizer.std)]
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = [sum((a[i] * Fraction(float(W[i, j])) for i in range(len(a))), Fraction(float(b[j])))
             for j in range(W.shape[1])]
        a = [max(v, Fraction(0)) for v in z] if k < len(model.weights) - 1 else z
    return np.array([float(v) for v in a])


def toy_data(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(LO, HI, (n, 4))
    Y = np.column_stack([30 * X[:, 0] * X[:, 1] / X[:, 2], 40 * X[:, 1] - 3 * X[:, 2] + X[:, 3]])
    return X, Y


def test_default_architecture():
    X, Y = toy_data(20)
    res = train(X, Y, TrainConfig(epochs=1))
    assert res.model.sizes == (4, 372, 372, 372, 2)


def test_zero_weights_give_output_bias():
    m = small_model()
    m.weights = [np.zeros_like(w) for w in m.weights]
    for p in np.random.default_rng(1).uniform(LO, HI, (5, 4)):
        np.testing.assert_array_equal(m(p), m.biases[-1])


def test_standardized_mean_is_zero():
    m = small_model()
    np.testing.assert_array_equal(m.standardizer.transform(m.standardizer.mean), np.zeros(4))
    X = np.random.default_rng(2).normal(3.0, 2.0, (50, 4))
    z = Standardizer.fit(X).transform(X)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-14)
    np.testing.assert_allclose(z.std(axis=0), 1.0, rtol=1e-14)


def test_standardizer_rejects_nonpositive_std():
    with pytest.raises(ValueError):
        Standardizer(np.zeros(4), np.array([1.0, 0.0, 1.0, 1.0]))
    # constant columns fit to unit std instead of dividing by zero
    assert Standardizer.fit(np.ones((5, 4))).std.tolist() == [1.0] * 4


def test_forward_matches_exact_arithmetic():
    for seed in range(4):
        m = small_model(seed)
        p = np.random.default_rng(seed + 10).uniform(LO, HI)
        np.testing.assert_allclose(m(p), exact_forward(m, p), rtol=1e-13, atol=1e-13)


def test_batch_and_single_agree():
    m = small_model()
    P = np.random.default_rng(3).uniform(LO, HI, (6, 4))
    batch = m(P)
    assert batch.shape == (6, 2)
    for p, out in zip(P, batch):
        np.testing.assert_allclose(m(p), out, rtol=1e-15, atol=1e-15)
    assert m.input_gradient(P).shape == (6, 2, 4)
    assert m.input_gradient(P[0]).shape == (2, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_input_gradient_matches_finite_differences(seed):
    m = small_model(seed % 7)
    p = np.random.default_rng(seed).uniform(LO, HI)
    G = m.input_gradient(p)
    h = 1e-6 * (HI - LO)
    fd = np.column_stack([(m(p + h[j] * e) - m(p - h[j] * e)) / (2 * h[j]) for j, e in enumerate(np.eye(4))])
    # skip points where a rectifier switches inside the stencil
    pre_p = m._forward(m.standardizer.transform(p[None]))[:-1]
    for j, e in enumerate(np.eye(4)):
        for sgn in (1, -1):
            pre_q = m._forward(m.standardizer.transform((p + sgn * h[j] * e)[None]))[:-1]
            if any(np.any((a > 0) != (b > 0)) for a, b in zip(pre_p, pre_q)):
                return
    scale = max(np.abs(G).max(), 1e-12)
    assert np.abs(G - fd).max() / scale < 1e-4


def test_doubling_std_halves_gradient():
    m = small_model()
    p = np.random.default_rng(4).uniform(LO, HI)
    G = m.input_gradient(p)
    # scale the first-layer weights too, so the network sees identical standardised inputs
    W0 = m.weights[0] * 2.0
    m2 = SurrogateModel([W0] + m.weights[1:], m.biases, Standardizer(m.standardizer.mean, 2 * m.standardizer.std))
    np.testing.assert_allclose(m2(p), m(p), rtol=1e-14)
    np.testing.assert_allclose(m2.input_gradient(p), G, rtol=1e-14)
    # same weights, doubled std: standardised input moves half as fast
    m3 = SurrogateModel(m.weights, m.biases, Standardizer(m.standardizer.mean, 2 * m.standardizer.std))
    p3 = m.standardizer.mean + 2 * (p - m.standardizer.mean)
    np.testing.assert_allclose(m3.input_gradient(p3), 0.5 * G, rtol=1e-14)


def test_forward_is_affine_between_kinks():
    m = small_model(5)
    p = np.random.default_rng(5).uniform(LO, HI)
    G = m.input_gradient(p)
    d = 1e-7 * (HI - LO) * np.array([1.0, -0.5, 0.3, 0.8])
    pre_p = m._forward(m.standardizer.transform(p[None]))[:-1]
    pre_q = m._forward(m.standardizer.transform((p + d)[None]))[:-1]
    assert all(np.array_equal(a > 0, b > 0) for a, b in zip(pre_p, pre_q))
    np.testing.assert_allclose(m(p + d) - m(p), G @ d, rtol=1e-6, atol=1e-15)
    np.testing.assert_allclose(m.input_gradient(p + d), G, rtol=1e-12)


def test_parameter_gradients_match_finite_differences():
    m = small_model(6)
    X, Y = toy_data(30, seed=6)
    loss, gW, gb = mae_and_gradients(m, X, Y)
    rng = np.random.default_rng(0)
    params = m.weights + m.biases
    grads = gW + gb
    checked = 0
    for p, g in zip(params, grads):
        for _ in range(6):
            idx = tuple(rng.integers(0, s) for s in p.shape)
            old = p[idx]
            h = 1e-7
            p[idx] = old + h
            up = mae_and_gradients(m, X, Y)[0]
            p[idx] = old - h
            down = mae_and_gradients(m, X, Y)[0]
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-4 * max(abs(g[idx]), 1e-3)
            checked += 1
    assert checked == 6 * len(params)
    assert loss == pytest.approx(np.abs(m(X) - Y).mean(), rel=1e-14)


def test_save_load_bit_exact(tmp_path):
    m = small_model(7)
    path = tmp_path / "m.json"
    m.save(path)
    back = SurrogateModel.load(path)
    for a, b in zip(m.weights + m.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
    assert np.array_equal(back.standardizer.mean, m.standardizer.mean)
    assert np.array_equal(back.standardizer.std, m.standardizer.std)
    p = np.random.default_rng(7).uniform(LO, HI, (5, 4))
    assert np.array_equal(back(p), m(p))


def test_load_rejects_inconsistent_sizes(tmp_path):
    d = small_model().to_dict()
    d["sizes"] = [4, 6, 5, 7, 3]
    with pytest.raises(ValueError):
        SurrogateModel.from_dict(d)


def test_batch_schedule():
    cfg = TrainConfig()
    assert [cfg.batch_size(e, 5000) for e in (0, 49, 50, 119, 120, 199)] == [64, 64, 256, 256, 1024, 1024]
    assert cfg.batch_size(150, 300) == 300


def test_cosine_step_size():
    cfg = TrainConfig(lr=2e-3, lr_final=1e-5, epochs=101)
    assert cfg.step_size(0) == 2e-3
    assert cfg.step_size(100) == pytest.approx(1e-5, rel=1e-12)
    assert cfg.step_size(50) == pytest.approx(0.5 * (2e-3 + 1e-5), rel=1e-12)
    steps = [cfg.step_size(e) for e in range(101)]
    assert all(b < a for a, b in zip(steps, steps[1:]))
    assert TrainConfig(lr=1e-3, lr_final=None).step_size(77) == 1e-3


def test_split_is_80_20_and_disjoint():
    tr, va = split_indices(2401, 0.2, seed=0)
    assert len(va) == 480 and len(tr) == 1921
    assert sorted(np.r_[tr, va].tolist()) == list(range(2401))


def test_training_deterministic_and_improving():
    X, Y = toy_data(200)
    cfg = TrainConfig(hidden=(32, 32, 32), epochs=40, lr=3e-3, batch_schedule=((0, 16), (20, 64)), seed=3)
    a, b = train(X, Y, cfg), train(X, Y, cfg)
    assert a.val_mae == b.val_mae
    assert all(np.array_equal(u, v) for u, v in zip(a.model.weights, b.model.weights))
    hist = np.array(a.history)
    assert hist[-5:, 0].mean() < 0.5 * hist[:5, 0].mean()
    assert a.val_mae < np.abs(Y - Y.mean(axis=0)).mean()
    assert a.seconds > 0


@pytest.mark.filterwarnings("ignore:invalid value")
def test_non_finite_loss_aborts():
    X, Y = toy_data(20)
    Y[3, 0] = np.inf
    with pytest.raises(FloatingPointError):
        train(X, Y, TrainConfig(hidden=(4,), epochs=1))
    with pytest.raises(ValueError):
        train(X[:, 0], Y)
