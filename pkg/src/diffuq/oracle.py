"""Ground-truth generators for validating the uncertainty iteration.

Two independent routes:

* ensemble_moments simulates N full stochastic trajectories (noise sampled
  from the predictive at each step plus the kind's injected noise) and
  reports empirical per-pixel moments with standard errors, the marginal law
  the iteration rules are meant to track.

* affine_closed_form computes that law exactly when the noise predictor is
  affine with state-independent predictive variance,

      eps(x, t) = a_t * x + b_t,   Var = gamma2_t,

  because every sampler update then composes affinely: with step update
  x' = A x + B eps + noise, E' = (A + B a_t) E + B b_t and
  Var' = (A + B a_t)^2 Var + B^2 gamma2_t + noise_var. The recursion here is
  derived by direct composition, deliberately not through the engine's
  variance-identity form, so agreement between the two is an algebraic check
  of the iteration rules (including the factor 2 on the cross term).

ExactAffineStats supplies the same closed forms step by step so the engine
can run with its Monte-Carlo blocks replaced by exact statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .samplers import FIRST_ORDER_KINDS, SamplerKind, Solver2Coeffs, solver2_coeffs, step_coeffs
from .schedule import NoiseSchedule
from .seeding import child_rng

__all__ = [
    "AffineScoreModel",
    "ExactAffineStats",
    "EnsembleMoments",
    "ensemble_moments",
    "affine_closed_form",
]


def _per_step(value, num_steps: int) -> np.ndarray:
    """Broadcast a scalar / per-step / per-step-per-pixel spec to (T+1, ...)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(num_steps + 1, float(arr))
    if arr.shape[0] != num_steps + 1:
        raise ValueError(f"per-step array must have leading length {num_steps + 1}")
    return arr.copy()


@dataclass(frozen=True)
class AffineScoreModel:
    """eps(x, t) = a_t x + b_t with state-independent predictive variance.

    a, b, gamma_sq may be scalars (constant in t), per-step arrays of length
    T+1 indexed by t, or per-step pixel fields of shape (T+1, c, h, w).
    Fractional times interpolate linearly between grid values.
    """

    a: np.ndarray
    b: np.ndarray
    gamma_sq: np.ndarray
    num_steps: int

    def __post_init__(self):
        for name in ("a", "b", "gamma_sq"):
            object.__setattr__(self, name, _per_step(getattr(self, name), self.num_steps))
        if np.any(self.gamma_sq < 0.0):
            raise ValueError("gamma_sq must be nonnegative")

    def _at(self, arr: np.ndarray, t: float):
        if float(t) == int(t):
            return arr[int(t)]
        lo = math.floor(t)
        w = t - lo
        return (1.0 - w) * arr[lo] + w * arr[lo + 1]

    def a_at(self, t):
        return self._at(self.a, t)

    def b_at(self, t):
        return self._at(self.b, t)

    def gamma_sq_at(self, t):
        return self._at(self.gamma_sq, t)

    def predict(self, x: np.ndarray, t) -> np.ndarray:
        return self.a_at(t) * x + self.b_at(t)

    def predictive(self, x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        mean = self.predict(x, t)
        var = np.broadcast_to(np.asarray(self.gamma_sq_at(t)), x.shape).copy()
        return mean, var


class ExactAffineStats:
    """Closed-form replacements for the engine's Monte-Carlo blocks."""

    def __init__(self, model: AffineScoreModel):
        self.model = model

    def first_order(self, mean, var, t):
        a = self.model.a_at(t)
        b = self.model.b_at(t)
        g2 = self.model.gamma_sq_at(t)
        eps_mean = a * mean + b
        eps_var = a * a * var + g2
        cov = a * var
        return eps_mean, np.broadcast_to(eps_var, mean.shape).copy(), cov

    def solver2(self, mean, var, c2: Solver2Coeffs):
        a_t = self.model.a_at(c2.t)
        b_t = self.model.b_at(c2.t)
        g_t = self.model.gamma_sq_at(c2.t)
        a_s = self.model.a_at(c2.s_t)
        b_s = self.model.b_at(c2.s_t)
        g_s = self.model.gamma_sq_at(c2.s_t)
        A_mid = c2.a_mid + c2.b_mid * a_t  # x_t coefficient inside the midpoint state
        m_mid = A_mid * mean + c2.b_mid * b_t
        v_mid = A_mid * A_mid * var + c2.b_mid * c2.b_mid * g_t
        eps_mean = a_s * m_mid + b_s
        eps_var = a_s * a_s * v_mid + g_s
        cov = a_s * A_mid * var
        return eps_mean, np.broadcast_to(eps_var, mean.shape).copy(), cov


# ---------------------------------------------------------------------------
# brute-force ensemble
# ---------------------------------------------------------------------------


@dataclass
class EnsembleMoments:
    mean: np.ndarray
    var: np.ndarray
    stderr_mean: np.ndarray
    stderr_var: np.ndarray
    n: int


def _ensemble_block(x_T, kind, model, s, size, rng):
    X = np.broadcast_to(x_T, (size, *x_T.shape)).copy()
    T = s.num_steps
    if kind.name == "dpm_solver2":
        for t in range(T, 1, -1):
            c2 = solver2_coeffs(s, t)
            mean_t, g2_t = model.predictive(X, t)
            eps_t = mean_t + np.sqrt(g2_t) * rng.standard_normal(X.shape)
            X_mid = c2.a_mid * X + c2.b_mid * eps_t
            mean_s, g2_s = model.predictive(X_mid, c2.s_t)
            eps_mid = mean_s + np.sqrt(g2_s) * rng.standard_normal(X.shape)
            X = c2.a * X + c2.b * eps_mid
        coef = step_coeffs(SamplerKind("ddim"), s, 1)
        mean_1, g2_1 = model.predictive(X, 1)
        eps = mean_1 + np.sqrt(g2_1) * rng.standard_normal(X.shape)
        return coef.a * X + coef.b * eps
    for t in range(T, 0, -1):
        coef = step_coeffs(kind, s, t)
        mean_t, g2_t = model.predictive(X, t)
        eps = mean_t + np.sqrt(g2_t) * rng.standard_normal(X.shape)
        X = coef.a * X + coef.b * eps
        if coef.noise_var > 0.0:
            X = X + math.sqrt(coef.noise_var) * rng.standard_normal(X.shape)
    return X


def ensemble_moments(
    x_T: np.ndarray,
    kind: SamplerKind,
    model,
    s: NoiseSchedule,
    N: int = 100_000,
    seed: int = 0,
    block_size: int = 8192,
) -> EnsembleMoments:
    """Empirical per-pixel moments of x_0 over N independent trajectories.

    Trajectories are simulated in fixed-size blocks, each with its own child
    stream, so results do not depend on scheduling order. Standard errors of
    the variance come from the fourth central moment.
    """
    if N < 100:
        raise ValueError("N must be >= 100 for meaningful standard errors")
    x_T = np.asarray(x_T, dtype=np.float64)
    outputs = []
    remaining = N
    block_idx = 0
    while remaining > 0:
        size = min(block_size, remaining)
        rng = child_rng(seed, "ensemble-block", block_idx)
        outputs.append(_ensemble_block(x_T, kind, model, s, size, rng))
        remaining -= size
        block_idx += 1
    x0 = np.concatenate(outputs, axis=0)
    mean = x0.mean(axis=0)
    var = x0.var(axis=0, ddof=1)
    centered = x0 - mean
    m4 = np.mean(centered**4, axis=0)
    var_of_var = (m4 - var * var * (N - 3) / (N - 1)) / N
    return EnsembleMoments(
        mean=mean,
        var=var,
        stderr_mean=np.sqrt(var / N),
        stderr_var=np.sqrt(np.clip(var_of_var, 0.0, None)),
        n=N,
    )


# ---------------------------------------------------------------------------
# closed form
# ---------------------------------------------------------------------------


def affine_closed_form(
    model: AffineScoreModel,
    kind: SamplerKind,
    s: NoiseSchedule,
    x_T: np.ndarray,
    var_init: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact E(x_0), Var(x_0) for an affine predictor, by direct recursion."""
    x_T = np.asarray(x_T, dtype=np.float64)
    E = x_T.astype(np.float64).copy()
    V = np.full_like(E, float(var_init))
    T = s.num_steps

    def first_order_step(coef, t, E, V):
        a_t = model.a_at(t)
        b_t = model.b_at(t)
        g_t = model.gamma_sq_at(t)
        gain = coef.a + coef.b * a_t
        E = gain * E + coef.b * b_t
        V = gain * gain * V + coef.b * coef.b * g_t + coef.noise_var
        return E, V

    if kind.name in FIRST_ORDER_KINDS:
        for t in range(T, 0, -1):
            E, V = first_order_step(step_coeffs(kind, s, t), t, E, V)
        return E, V

    for t in range(T, 1, -1):
        c2 = solver2_coeffs(s, t)
        a_t = model.a_at(t)
        b_t = model.b_at(t)
        g_t = model.gamma_sq_at(t)
        a_s = model.a_at(c2.s_t)
        b_s = model.b_at(c2.s_t)
        g_s = model.gamma_sq_at(c2.s_t)
        A_mid = c2.a_mid + c2.b_mid * a_t
        gain = c2.a + c2.b * a_s * A_mid
        offset = c2.b * (a_s * c2.b_mid * b_t + b_s)
        E = gain * E + offset
        V = (
            gain * gain * V
            + (c2.b * a_s * c2.b_mid) ** 2 * g_t
            + c2.b * c2.b * g_s
        )
        E = np.asarray(E)
        V = np.broadcast_to(V, E.shape).copy()
    E, V = first_order_step(step_coeffs(SamplerKind("ddim"), s, 1), 1, E, V)
    return np.asarray(E), np.broadcast_to(V, E.shape).copy()
