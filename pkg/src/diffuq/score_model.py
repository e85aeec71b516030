"""Toy noise-prediction networks, synthetic pixel datasets, and MAP training.

The network is a small MLP on flattened pixels with sinusoidal time features
and an explicit final affine layer

    eps_hat(x, t) = W phi(x, t) + b,

so the output is exactly affine in the last-layer parameters (W, b) for a
fixed input. That affinity is what lets a Gaussian posterior over (W, b)
induce a Gaussian predictive over the noise estimate.

Training minimizes the standard denoising objective with unit time weighting,

    E_{x, xi, t} || eps_hat(alpha_t x + sigma_t xi, t) - xi ||^2
        + weight_decay * ||theta||^2,

by plain SGD with a fixed step size; the weight-decay term makes the result a
MAP estimate under an isotropic Gaussian prior, which the Laplace fit relies
on. Gradients are computed analytically (see loss_and_grads) and are checked
against finite differences in the test suite.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .arrayio import load_arrays, save_arrays
from .schedule import NoiseSchedule
from .seeding import child_rng

__all__ = [
    "Dataset",
    "ScoreNet",
    "TrainingDivergence",
    "synth_dataset",
    "init_scorenet",
    "predict_noise",
    "loss_and_grads",
    "train_map",
    "save_checkpoint",
    "load_checkpoint",
]

DATASET_KINDS = ("gaussian-blobs", "two-mode-gaussian", "checker-fields")


class TrainingDivergence(RuntimeError):
    """Raised when the training objective becomes non-finite."""


@dataclass(frozen=True)
class Dataset:
    """i.i.d. samples from a named synthetic generator, shape (n, c, h, w)."""

    samples: np.ndarray
    descriptor: dict

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.samples.shape[1:])


def _blob_pattern(shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ci, cj = (h - 1) / 2.0, (w - 1) / 2.0
    r = max(h, w) / 4.0
    bump = np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) / (2.0 * r * r))
    return np.broadcast_to(bump, (c, h, w)).astype(np.float64)


def _mode_pattern(shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    pat = np.ones((c, h, w))
    pat[..., w // 2:] = -1.0
    return 0.8 * pat


def _checker_pattern(shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    board = np.where((ii + jj) % 2 == 0, 1.0, -1.0)
    return np.broadcast_to(board, (c, h, w)).astype(np.float64)


def generator_mean(kind: str, shape: tuple[int, int, int]) -> np.ndarray:
    """Closed-form per-pixel mean of the named generator."""
    if kind == "gaussian-blobs":
        return _blob_pattern(shape)
    if kind in ("two-mode-gaussian", "checker-fields"):
        return np.zeros(shape)
    raise ValueError(f"unknown dataset kind {kind!r}")


def generator_pixel_std(kind: str, shape: tuple[int, int, int]) -> np.ndarray:
    """Closed-form per-pixel standard deviation of the named generator."""
    if kind == "gaussian-blobs":
        return np.sqrt((0.25 * _blob_pattern(shape)) ** 2 + 0.05**2)
    if kind == "two-mode-gaussian":
        return np.sqrt(_mode_pattern(shape) ** 2 + 0.15**2)
    if kind == "checker-fields":
        # sign * amplitude * (+-1) board: mean 0, second moment E[A^2] + noise
        return np.sqrt((1.0 + 0.2**2) * _checker_pattern(shape) ** 2 + 0.05**2)
    raise ValueError(f"unknown dataset kind {kind!r}")


def synth_dataset(kind: str, n: int, seed: int, shape: tuple[int, int, int] = (1, 4, 4)) -> Dataset:
    """Draw n i.i.d. samples; same (kind, n, seed, shape) reproduces bit-identical data."""
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    rng = child_rng(seed, f"dataset:{kind}")
    if kind == "gaussian-blobs":
        base = _blob_pattern(shape)
        amp = 1.0 + 0.25 * rng.standard_normal(n)
        samples = amp[:, None, None, None] * base + 0.05 * rng.standard_normal((n, *shape))
    elif kind == "two-mode-gaussian":
        base = _mode_pattern(shape)
        sign = rng.choice([-1.0, 1.0], size=n)
        samples = sign[:, None, None, None] * base + 0.15 * rng.standard_normal((n, *shape))
    else:  # checker-fields
        base = _checker_pattern(shape)
        sign = rng.choice([-1.0, 1.0], size=n)
        amp = 1.0 + 0.2 * rng.standard_normal(n)
        samples = (sign * amp)[:, None, None, None] * base + 0.05 * rng.standard_normal((n, *shape))
    descriptor = {"kind": kind, "n": n, "seed": int(seed), "shape": list(shape)}
    return Dataset(samples=samples, descriptor=descriptor)


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


@dataclass
class ScoreNet:
    """MLP noise predictor with an explicit affine last layer.

    hidden holds feature-layer (W_i, b_i) pairs mapped through the chosen
    activation (softplus by default; relu is cheaper for wide layers); the
    feature vector phi(x, t) is the last hidden activation (or the raw input
    when there are no hidden layers). W has shape (out_dim, feat_dim).
    """

    shape: tuple[int, int, int]
    time_features: int
    time_scale: float
    hidden: list[tuple[np.ndarray, np.ndarray]]
    W: np.ndarray
    b: np.ndarray
    activation: str = "softplus"

    @property
    def out_dim(self) -> int:
        c, h, w = self.shape
        return c * h * w

    @property
    def feat_dim(self) -> int:
        return self.W.shape[1]

    def _time_embed(self, t, batch: int) -> np.ndarray:
        if self.time_features == 0:
            return np.empty((batch, 0))
        scalar = np.ndim(t) == 0
        if scalar:
            # per-step sampling reuses the same few time values constantly
            cache = self.__dict__.setdefault("_embed_cache", {})
            key = (float(t), batch)
            hit = cache.get(key)
            if hit is not None:
                return hit
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        k = np.arange(self.time_features)
        angles = t_arr[:, None] * (math.pi * 2.0**k)[None, :] / self.time_scale
        out = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
        if scalar and len(cache) < 4096:
            cache[key] = out
        return out

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "softplus":
            return np.logaddexp(0.0, z)
        return np.maximum(z, 0.0)  # relu

    def _activate_grad(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "softplus":
            return expit(z)
        return (z > 0.0).astype(np.float64)

    def _forward(self, x: np.ndarray, t) -> tuple[np.ndarray, list]:
        """Returns (phi, cache) where cache holds layer inputs and pre-activations."""
        flat = np.asarray(x, dtype=np.float64).reshape(-1, self.out_dim)
        h = np.concatenate([flat, self._time_embed(t, flat.shape[0])], axis=1)
        cache = []
        for W_i, b_i in self.hidden:
            z = h @ W_i.T + b_i
            cache.append((h, z))
            h = self._activate(z)
        return h, cache

    def features(self, x: np.ndarray, t) -> np.ndarray:
        """phi(x, t), shape (batch, feat_dim); x may be (c,h,w) or (batch, c,h,w)."""
        phi, _ = self._forward(x, t)
        return phi

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        """MAP noise prediction with the same leading shape as x."""
        x = np.asarray(x, dtype=np.float64)
        phi, _ = self._forward(x, t)
        out = phi @ self.W.T + self.b
        return out.reshape(x.shape)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, (W_i, b_i) in enumerate(self.hidden):
            params[f"hidden_W_{i}"] = W_i
            params[f"hidden_b_{i}"] = b_i
        params["W"] = self.W
        params["b"] = self.b
        return params

    def copy(self) -> "ScoreNet":
        return copy.deepcopy(self)


def init_scorenet(
    shape: tuple[int, int, int],
    hidden_sizes: tuple[int, ...] = (32,),
    time_features: int = 4,
    time_scale: float = 100.0,
    seed: int = 0,
    activation: str = "softplus",
) -> ScoreNet:
    """Seeded Gaussian init, scaled by fan-in."""
    c, h, w = shape
    out_dim = c * h * w
    in_dim = out_dim + 2 * time_features
    rng = child_rng(seed, "scorenet-init")
    hidden = []
    prev = in_dim
    for size in hidden_sizes:
        Wl = rng.standard_normal((size, prev)) / math.sqrt(prev)
        bl = np.zeros(size)
        hidden.append((Wl, bl))
        prev = size
    if activation not in ("softplus", "relu"):
        raise ValueError("activation must be 'softplus' or 'relu'")
    W = rng.standard_normal((out_dim, prev)) / math.sqrt(prev)
    b = np.zeros(out_dim)
    return ScoreNet(
        shape=tuple(shape),
        time_features=time_features,
        time_scale=float(time_scale),
        hidden=hidden,
        W=W,
        b=b,
        activation=activation,
    )


def predict_noise(net: ScoreNet, x: np.ndarray, t) -> np.ndarray:
    """Deterministic MAP evaluation; rejects shape mismatches."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-3:] != tuple(net.shape):
        raise ValueError(f"pixel field shape {x.shape[-3:]} does not match net {net.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("pixel field must be finite")
    return net.predict(x, t)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def loss_and_grads(
    net: ScoreNet,
    x0: np.ndarray,
    t_batch: np.ndarray,
    noise: np.ndarray,
    s: NoiseSchedule,
    weight_decay: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Denoising objective and analytic gradients on one batch.

    The data term is the batch mean of the squared pixel-sum residual
    ||eps_hat(alpha_t x0 + sigma_t xi, t) - xi||^2; the regularizer is
    weight_decay times the squared norm of all parameters.
    """
    batch = x0.shape[0]
    alpha = s.alpha[t_batch][:, None, None, None]
    sigma = s.sigma[t_batch][:, None, None, None]
    x_t = alpha * x0 + sigma * noise

    flat = x_t.reshape(batch, net.out_dim)
    h = np.concatenate([flat, net._time_embed(t_batch.astype(np.float64), batch)], axis=1)
    cache = []
    for W_i, b_i in net.hidden:
        z = h @ W_i.T + b_i
        cache.append((h, z))
        h = net._activate(z)
    out = h @ net.W.T + net.b
    resid = out - noise.reshape(batch, net.out_dim)

    data_term = float(np.sum(resid * resid) / batch)
    reg = sum(float(np.sum(p * p)) for p in net.parameters().values())
    loss = data_term + weight_decay * reg

    grads: dict[str, np.ndarray] = {}
    d_out = (2.0 / batch) * resid
    grads["W"] = d_out.T @ h + 2.0 * weight_decay * net.W
    grads["b"] = d_out.sum(axis=0) + 2.0 * weight_decay * net.b
    d_h = d_out @ net.W
    for i in range(len(net.hidden) - 1, -1, -1):
        W_i, b_i = net.hidden[i]
        h_in, z = cache[i]
        d_z = d_h * net._activate_grad(z)
        grads[f"hidden_W_{i}"] = d_z.T @ h_in + 2.0 * weight_decay * W_i
        grads[f"hidden_b_{i}"] = d_z.sum(axis=0) + 2.0 * weight_decay * b_i
        d_h = d_z @ W_i
    return loss, grads


def train_map(
    net: ScoreNet,
    data: Dataset,
    s: NoiseSchedule,
    weight_decay: float,
    steps: int,
    seed: int,
    lr: float = 5e-3,
    batch_size: int = 64,
) -> tuple[ScoreNet, np.ndarray]:
    """SGD with a fixed step size; returns (trained copy, per-step objective).

    weight_decay must be positive so the Laplace prior precision is well
    defined. A non-finite objective aborts with TrainingDivergence.
    """
    if weight_decay <= 0.0:
        raise ValueError("weight_decay must be > 0 (it defines the Gaussian prior)")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    net = net.copy()
    losses = np.zeros(steps)
    if steps == 0:
        return net, losses

    n = data.samples.shape[0]
    batch_size = min(batch_size, n)
    rng = child_rng(seed, "train")
    params = net.parameters()
    for step in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        t_batch = rng.integers(1, s.num_steps + 1, size=batch_size)
        noise = rng.standard_normal((batch_size, *net.shape))
        loss, grads = loss_and_grads(net, data.samples[idx], t_batch, noise, s, weight_decay)
        if not math.isfinite(loss):
            raise TrainingDivergence(f"objective became non-finite at step {step}")
        losses[step] = loss
        for name, g in grads.items():
            params[name] -= lr * g
    return net, losses


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, net: ScoreNet) -> None:
    meta = {
        "shape": list(net.shape),
        "time_features": net.time_features,
        "time_scale": net.time_scale,
        "hidden_sizes": [W_i.shape[0] for W_i, _ in net.hidden],
        "activation": net.activation,
    }
    save_arrays(path, net.parameters(), meta=meta)


def load_checkpoint(path: str | Path) -> ScoreNet:
    arrays, meta = load_arrays(path)
    hidden = []
    for i in range(len(meta["hidden_sizes"])):
        hidden.append((arrays[f"hidden_W_{i}"], arrays[f"hidden_b_{i}"]))
    return ScoreNet(
        shape=tuple(meta["shape"]),
        time_features=int(meta["time_features"]),
        time_scale=float(meta["time_scale"]),
        hidden=hidden,
        W=arrays["W"],
        b=arrays["b"],
        activation=meta.get("activation", "softplus"),
    )
