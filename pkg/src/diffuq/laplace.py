"""Last-layer Laplace posterior and its Gaussian predictive.

The trained net is treated as a MAP estimate; curvature over the last-layer
weights is the diagonal generalized Gauss-Newton under a Gaussian likelihood
with observation variance obs_noise_var. For the affine last layer the
Jacobian of output pixel r w.r.t. W_{rf} is just the feature phi_f, so

    precision[r, f] = prior_precision + (1 / obs_noise_var) * sum_i phi_f(x_i, t_i)^2

with no second-order terms. The predictive at an input is then Gaussian:
mean is the MAP output, and because the layer is affine the per-pixel
variance has the closed form

    gamma2_exact[r] = sum_f phi_f^2 / precision[r, f]   (+ bias term if enabled).

predictive() estimates the same variance by Monte Carlo over weight draws
(default 100 samples), which is the route large models take; the exact form
is what the propagation engine and the tests use as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrayio import load_arrays, save_arrays
from .schedule import NoiseSchedule
from .score_model import Dataset, ScoreNet
from .seeding import child_rng

__all__ = [
    "PredictiveMoments",
    "LaplacePosterior",
    "PosteriorModel",
    "ggn_diag_precision",
    "fit_lastlayer",
    "predictive",
    "predictive_exact",
    "save_posterior",
    "load_posterior",
]


@dataclass(frozen=True)
class PredictiveMoments:
    """Per-pixel mean and nonnegative variance of a noise-prediction law."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean/variance shapes differ")
        if np.any(self.variance < 0.0):
            raise ValueError("predictive variance must be nonnegative")


@dataclass(frozen=True)
class LaplacePosterior:
    """Diagonal last-layer posterior: MAP weights plus per-entry precision."""

    map_W: np.ndarray
    map_b: np.ndarray
    diag_precision: np.ndarray  # (out_dim, feat_dim)
    prior_precision: float
    obs_noise_var: float
    bias_precision: np.ndarray | None = None  # (out_dim,) when the bias is uncertain

    def __post_init__(self):
        if self.prior_precision <= 0.0 or self.obs_noise_var <= 0.0:
            raise ValueError("prior_precision and obs_noise_var must be positive")
        if not np.all(np.isfinite(self.diag_precision)):
            raise ValueError("diag_precision must be finite")
        if np.any(self.diag_precision < self.prior_precision - 1e-12):
            raise ValueError("curvature cannot fall below the prior precision")


def ggn_diag_precision(
    features: np.ndarray, prior_precision: float, obs_noise_var: float
) -> np.ndarray:
    """Diagonal GGN accumulation over fit-point features, shape (feat_dim,)."""
    features = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise ValueError("non-finite features")
    return prior_precision + np.sum(features * features, axis=0) / obs_noise_var


def fit_lastlayer(
    net: ScoreNet,
    data: Dataset,
    s: NoiseSchedule,
    prior_precision: float,
    obs_noise_var: float = 1.0,
    n_fit_points: int = 256,
    seed: int = 0,
    include_bias: bool = False,
) -> LaplacePosterior:
    """Fit the diagonal posterior on forward-diffused fit points.

    Fit points are (alpha_t x + sigma_t xi, t) with x drawn from the dataset
    and t uniform on 1..T, matching the training distribution.
    """
    if prior_precision <= 0.0 or obs_noise_var <= 0.0:
        raise ValueError("prior_precision and obs_noise_var must be positive")
    if n_fit_points < 1:
        raise ValueError("n_fit_points must be >= 1")
    rng = child_rng(seed, "laplace-fit")
    n = data.samples.shape[0]
    idx = rng.integers(0, n, size=n_fit_points)
    t_batch = rng.integers(1, s.num_steps + 1, size=n_fit_points)
    noise = rng.standard_normal((n_fit_points, *net.shape))
    x_t = (
        s.alpha[t_batch][:, None, None, None] * data.samples[idx]
        + s.sigma[t_batch][:, None, None, None] * noise
    )
    phi = net.features(x_t, t_batch.astype(np.float64))
    diag_feat = ggn_diag_precision(phi, prior_precision, obs_noise_var)
    diag = np.broadcast_to(diag_feat, (net.out_dim, net.feat_dim)).copy()
    bias_prec = None
    if include_bias:
        bias_prec = np.full(net.out_dim, prior_precision + n_fit_points / obs_noise_var)
    return LaplacePosterior(
        map_W=net.W.copy(),
        map_b=net.b.copy(),
        diag_precision=diag,
        prior_precision=float(prior_precision),
        obs_noise_var=float(obs_noise_var),
        bias_precision=bias_prec,
    )


def _gamma_sq_exact(post: LaplacePosterior, phi: np.ndarray) -> np.ndarray:
    """Closed-form predictive variance per output pixel, shape (batch, out_dim)."""
    g2 = (phi * phi) @ (1.0 / post.diag_precision).T
    if post.bias_precision is not None:
        g2 = g2 + 1.0 / post.bias_precision
    return g2


def predictive_exact(post: LaplacePosterior, net: ScoreNet, x: np.ndarray, t) -> PredictiveMoments:
    """MAP mean and exact affine-layer variance at (x, t)."""
    x = np.asarray(x, dtype=np.float64)
    phi = net.features(x, t)
    mean = (phi @ post.map_W.T + post.map_b).reshape(x.shape)
    var = _gamma_sq_exact(post, phi).reshape(x.shape)
    return PredictiveMoments(mean=mean, variance=var)


def predictive(
    post: LaplacePosterior,
    net: ScoreNet,
    x: np.ndarray,
    t,
    n_weight_samples: int = 100,
    seed: int = 0,
) -> PredictiveMoments:
    """Monte-Carlo predictive: variance of outputs under posterior weight draws.

    The mean is the MAP output, not the empirical draw mean. The default of
    100 weight samples mirrors standard practice at scale; the test suite
    compares this estimate against the exact closed form.
    """
    if n_weight_samples < 2:
        raise ValueError("n_weight_samples must be >= 2")
    x = np.asarray(x, dtype=np.float64)
    phi = net.features(x, t)  # (batch, F)
    mean = (phi @ post.map_W.T + post.map_b).reshape(x.shape)

    rng = child_rng(seed, "laplace-predictive")
    scale = 1.0 / np.sqrt(post.diag_precision)  # (d, F)
    draws = rng.standard_normal((n_weight_samples, *post.map_W.shape))
    # perturbation of output r for draw k: sum_f dW[k,r,f] phi[., f]
    delta = np.einsum("krf,nf->knr", draws * scale, phi)
    if post.bias_precision is not None:
        b_scale = 1.0 / np.sqrt(post.bias_precision)
        delta = delta + (rng.standard_normal((n_weight_samples, post.map_b.size)) * b_scale)[:, None, :]
    var = np.var(delta, axis=0, ddof=1).reshape(x.shape)
    return PredictiveMoments(mean=mean, variance=var)


class PosteriorModel:
    """Bundles (net, posterior) behind the noise-model interface.

    predict(x, t)    -> MAP noise prediction
    predictive(x, t) -> (mean, exact per-pixel predictive variance)
    """

    def __init__(self, net: ScoreNet, post: LaplacePosterior):
        self.net = net
        self.post = post
        self._W_T = np.ascontiguousarray(post.map_W.T)
        self._inv_prec_T = np.ascontiguousarray((1.0 / post.diag_precision).T)
        self._inv_bias = None if post.bias_precision is None else 1.0 / post.bias_precision

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        return self.net.predict(x, t)

    def predictive(self, x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        phi = self.net.features(x, t)
        mean = (phi @ self._W_T + self.post.map_b).reshape(x.shape)
        var = (phi * phi) @ self._inv_prec_T
        if self._inv_bias is not None:
            var = var + self._inv_bias
        return mean, var.reshape(x.shape)


class ZeroUncertaintyModel:
    """A net with gamma^2 identically zero; collapses runs to vanilla sampling."""

    def __init__(self, net):
        self.net = net

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        return self.net.predict(x, t)

    def predictive(self, x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        mean = self.net.predict(x, t)
        return mean, np.zeros_like(mean)


def save_posterior(path: str | Path, post: LaplacePosterior) -> None:
    arrays = {
        "map_W": post.map_W,
        "map_b": post.map_b,
        "diag_precision": post.diag_precision,
    }
    if post.bias_precision is not None:
        arrays["bias_precision"] = post.bias_precision
    meta = {
        "prior_precision": post.prior_precision,
        "obs_noise_var": post.obs_noise_var,
        "include_bias": post.bias_precision is not None,
    }
    save_arrays(path, arrays, meta=meta)


def load_posterior(path: str | Path) -> LaplacePosterior:
    arrays, meta = load_arrays(path)
    return LaplacePosterior(
        map_W=arrays["map_W"],
        map_b=arrays["map_b"],
        diag_precision=arrays["diag_precision"],
        prior_precision=float(meta["prior_precision"]),
        obs_noise_var=float(meta["obs_noise_var"]),
        bias_precision=arrays.get("bias_precision"),
    )
