"""Datasets, network affinity, analytic gradients, MAP training, checkpoints."""

import numpy as np
import pytest

from diffuq.schedule import make_vp_schedule
from diffuq.score_model import (
    TrainingDivergence,
    generator_mean,
    generator_pixel_std,
    init_scorenet,
    load_checkpoint,
    loss_and_grads,
    predict_noise,
    save_checkpoint,
    synth_dataset,
    train_map,
)

SHAPE = (1, 4, 4)


# -- datasets ---------------------------------------------------------------


def test_dataset_determinism():
    a = synth_dataset("two-mode-gaussian", 4, seed=0)
    b = synth_dataset("two-mode-gaussian", 4, seed=0)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = synth_dataset("two-mode-gaussian", 4, seed=1)
    assert a.samples.tobytes() != c.samples.tobytes()


def test_dataset_validation():
    with pytest.raises(ValueError):
        synth_dataset("unknown-kind", 4, seed=0)
    with pytest.raises(ValueError):
        synth_dataset("gaussian-blobs", 0, seed=0)


@pytest.mark.parametrize("kind", ["gaussian-blobs", "two-mode-gaussian", "checker-fields"])
def test_dataset_mean_matches_generator(kind):
    n = 1000
    data = synth_dataset(kind, n, seed=1)
    se = generator_pixel_std(kind, SHAPE) / np.sqrt(n)
    assert np.all(np.abs(data.samples.mean(axis=0) - generator_mean(kind, SHAPE)) < 3.0 * se + 1e-12)


def test_dataset_descriptor():
    data = synth_dataset("checker-fields", 7, seed=3, shape=(1, 2, 2))
    assert data.descriptor == {"kind": "checker-fields", "n": 7, "seed": 3, "shape": [1, 2, 2]}


# -- network ----------------------------------------------------------------


def test_predict_zero_last_layer_is_zero():
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    net.W[:] = 0.0
    net.b[:] = 0.0
    x = np.ones(SHAPE)
    assert np.all(predict_noise(net, x, 3) == 0.0)


def test_predict_affine_scaling_and_determinism():
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    x = np.linspace(-1, 1, 16).reshape(SHAPE)
    out1 = predict_noise(net, x, 5)
    doubled = net.copy()
    doubled.W *= 2.0
    doubled.b *= 2.0
    assert np.allclose(predict_noise(doubled, x, 5), 2.0 * out1, rtol=0, atol=1e-14)
    assert np.array_equal(out1, predict_noise(net, x, 5))


def test_affinity_identity():
    # output(W1+W2, b1+b2) == output(W1,b1) + output(W2,b2) - output(0,0)
    rng = np.random.default_rng(0)
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    x = rng.standard_normal(SHAPE)
    W1, b1 = net.W.copy(), rng.standard_normal(net.b.shape)
    W2, b2 = rng.standard_normal(net.W.shape), rng.standard_normal(net.b.shape)

    def out(W, b):
        n = net.copy()
        n.W, n.b = W, b
        return n.predict(x, 2)

    lhs = out(W1 + W2, b1 + b2)
    rhs = out(W1, b1) + out(W2, b2) - out(np.zeros_like(W1), np.zeros_like(b1))
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_predict_shape_and_finiteness_checks():
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    with pytest.raises(ValueError):
        predict_noise(net, np.ones((1, 3, 3)), 2)
    with pytest.raises(ValueError):
        predict_noise(net, np.full(SHAPE, np.nan), 2)


@pytest.mark.parametrize("activation", ["softplus", "relu"])
def test_gradients_match_finite_differences(activation):
    s = make_vp_schedule(1e-3, 0.17, 20)
    net = init_scorenet(SHAPE, hidden_sizes=(6,), time_features=2, time_scale=20, seed=1, activation=activation)
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal((5, *SHAPE))
    t_batch = rng.integers(1, 21, size=5)
    noise = rng.standard_normal((5, *SHAPE))
    wd = 1e-3
    _, grads = loss_and_grads(net, x0, t_batch, noise, s, wd)

    params = net.parameters()
    h = 1e-6
    checked = 0
    for name, arr in params.items():
        flat = arr.ravel()
        for idx in rng.choice(flat.size, size=min(5, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = loss_and_grads(net, x0, t_batch, noise, s, wd)
            flat[idx] = orig - h
            lm, _ = loss_and_grads(net, x0, t_batch, noise, s, wd)
            flat[idx] = orig
            fd = (lp - lm) / (2 * h)
            an = grads[name].ravel()[idx]
            assert abs(fd - an) < 1e-4 * max(1.0, abs(fd)), f"{name}[{idx}]: {fd} vs {an}"
            checked += 1
    assert checked >= 20


# -- training ---------------------------------------------------------------


def test_train_zero_steps_is_identity():
    s = make_vp_schedule(1e-3, 0.17, 20)
    data = synth_dataset("two-mode-gaussian", 32, seed=0)
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    trained, losses = train_map(net, data, s, weight_decay=1e-4, steps=0, seed=0)
    assert losses.size == 0
    for name, arr in trained.parameters().items():
        assert np.array_equal(arr, net.parameters()[name])


def test_train_loss_decreases():
    s = make_vp_schedule(1e-3, 0.17, 20)
    data = synth_dataset("two-mode-gaussian", 128, seed=0)
    net = init_scorenet(SHAPE, hidden_sizes=(16,), seed=0)
    _, losses = train_map(net, data, s, weight_decay=1e-4, steps=1500, seed=0, lr=3e-3)
    n = losses.size // 10
    assert losses[-n:].mean() < losses[:n].mean()


def test_train_rejects_bad_arguments_and_divergence():
    s = make_vp_schedule(1e-3, 0.17, 20)
    data = synth_dataset("two-mode-gaussian", 32, seed=0)
    net = init_scorenet(SHAPE, hidden_sizes=(8,), seed=0)
    with pytest.raises(ValueError):
        train_map(net, data, s, weight_decay=0.0, steps=10, seed=0)
    with pytest.raises(TrainingDivergence), np.errstate(over="ignore", invalid="ignore"):
        train_map(net, data, s, weight_decay=1e-4, steps=400, seed=0, lr=1e3)


def test_linear_net_reaches_ridge_optimum():
    """A no-hidden-layer net on 1-pixel Gaussian data approaches the population
    least-squares noise predictor, solved independently by 2x2 normal equations."""
    shape = (1, 1, 1)
    T = 20
    s = make_vp_schedule(1e-3, 0.17, T)
    mu_x, var_x = 0.4, 0.25
    rng = np.random.default_rng(9)
    n = 4096
    samples = (mu_x + np.sqrt(var_x) * rng.standard_normal(n)).reshape(n, 1, 1, 1)
    from diffuq.score_model import Dataset

    data = Dataset(samples=samples, descriptor={"kind": "gaussian", "n": n, "seed": 9, "shape": [1, 1, 1]})

    # population normal equations over t uniform on 1..T, phi = [x_t, 1]:
    # E[x_t] = a_t mu, E[x_t^2] = a_t^2 (var+mu^2) + sig_t^2, E[eps x_t] = sig_t
    A = np.zeros((2, 2))
    rhs = np.zeros(2)
    for t in range(1, T + 1):
        a_t, sig_t = s.alpha[t], s.sigma[t]
        Ex = a_t * mu_x
        Exx = a_t**2 * (var_x + mu_x**2) + sig_t**2
        A += np.array([[Exx, Ex], [Ex, 1.0]])
        rhs += np.array([sig_t, 0.0])
    A /= T
    rhs /= T
    w_opt, b_opt = np.linalg.solve(A, rhs)

    net = init_scorenet(shape, hidden_sizes=(), time_features=0, time_scale=T, seed=3)
    trained, _ = train_map(net, data, s, weight_decay=1e-6, steps=12000, seed=3, lr=5e-3, batch_size=256)
    w_hat = float(trained.W[0, 0])
    b_hat = float(trained.b[0])
    err = np.hypot(w_hat - w_opt, b_hat - b_opt) / np.hypot(w_opt, b_opt)
    assert err < 0.05, f"relative parameter error {err:.3f} (got {w_hat:.4f},{b_hat:.4f} vs {w_opt:.4f},{b_opt:.4f})"


# -- checkpoints ------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    net = init_scorenet(SHAPE, hidden_sizes=(8, 4), time_features=3, time_scale=50, seed=7, activation="relu")
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, net)
    loaded = load_checkpoint(path)
    assert loaded.shape == net.shape
    assert loaded.activation == "relu"
    for name, arr in net.parameters().items():
        assert np.array_equal(arr, loaded.parameters()[name])
    save_checkpoint(tmp_path / "ckpt2.bin", loaded)
    assert (tmp_path / "ckpt.bin").read_bytes() == (tmp_path / "ckpt2.bin").read_bytes()
