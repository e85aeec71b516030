"""Reverse-process samplers and their per-step linear coefficients.

Every supported update is affine in (x_t, eps) plus optional injected noise:

    x_{t-1} = a * x_t + b * eps + sqrt(noise_var) * z,   z ~ N(0, I)

with per-kind coefficients (beta_t the DDPM rate, ap_t = 1 - beta_t,
abar_t the running product, alpha/sigma the VP pair):

    euler_sde     a = 1 - f_t,            b = -g2_t / sigma_t,     noise = g2_t
    ddpm          a = 1/sqrt(ap_t),       b = -beta_t/sqrt(ap_t (1-abar_t)),
                                                                   noise = beta_t
    analytic_dpm  same a, b as ddpm;  noise = optimal reverse variance driven by
                  the dataset-averaged squared score norm Gamma_t
    ddim          a = alpha_{t-1}/alpha_t, b = sigma_{t-1} - a sigma_t, noise = 0

The second-order solver threads a midpoint state between t and t-1 located at
the half-log-SNR midpoint: with h_t = lambda_{t-1} - lambda_t,

    x_mid   = (alpha_mid/alpha_t) x_t - sigma_mid (e^{h_t/2} - 1) eps_t
    x_{t-1} = (alpha_{t-1}/alpha_t) x_t - sigma_{t-1} (e^{h_t} - 1) eps_mid.

Its final step to t = 0 cannot be second order (the half-log-SNR diverges at
the data boundary), so chains finish with a first-order (ddim) step, which is
exactly the order-1 special case of the same solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule, ScheduleError

__all__ = [
    "FIRST_ORDER_KINDS",
    "ALL_KINDS",
    "SamplerKind",
    "StepCoeffs",
    "Solver2Coeffs",
    "step_coeffs",
    "solver2_coeffs",
    "advance",
    "vanilla_sample",
]

FIRST_ORDER_KINDS = ("euler_sde", "ddpm", "analytic_dpm", "ddim")
ALL_KINDS = FIRST_ORDER_KINDS + ("dpm_solver2",)


@dataclass(frozen=True)
class SamplerKind:
    """Sampler name plus per-kind parameters (Gamma array for analytic_dpm)."""

    name: str
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.name not in ALL_KINDS:
            raise ValueError(f"unknown sampler kind {self.name!r}; expected one of {ALL_KINDS}")
        if self.gamma is not None:
            if self.name != "analytic_dpm":
                raise ValueError("gamma applies to analytic_dpm only")
            g = np.asarray(self.gamma, dtype=np.float64)
            if not np.all(np.isfinite(g[1:])) or np.any(g[1:] < 0.0):
                raise ValueError("analytic_dpm gamma entries must be finite and >= 0")
            object.__setattr__(self, "gamma", g)

    def gamma_at(self, t: int) -> float:
        if self.gamma is None:
            raise ValueError("analytic_dpm requires a precomputed gamma array")
        return float(self.gamma[t])


@dataclass(frozen=True)
class StepCoeffs:
    a: float
    b: float
    noise_var: float


@dataclass(frozen=True)
class Solver2Coeffs:
    """Two-stage coefficients for the step t -> t-1 with midpoint s_t."""

    t: int
    s_t: float
    a: float  # alpha_{t-1}/alpha_t (outer x coefficient)
    b: float  # -sigma_{t-1}(e^h - 1) (outer eps_mid coefficient)
    a_mid: float  # alpha_mid/alpha_t
    b_mid: float  # -sigma_mid(e^{h/2} - 1)
    h: float


def step_coeff_arrays(kind: SamplerKind, s: NoiseSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-step (a, b, noise_var) arrays indexed by t = 1..T (entry 0 is nan).

    Elementwise identical to step_coeffs at every t; precomputed once per run
    so the step loop stays cheap.
    """
    T = s.num_steps
    pad = np.full(1, np.nan)
    if kind.name == "euler_sde":
        f = s.f_grid[1:]
        g2 = s.g_sq_grid[1:]
        a = 1.0 - f
        b = -g2 / s.sigma[1:]
        nv = g2.copy()
    elif kind.name in ("ddpm", "analytic_dpm"):
        beta = s.beta
        ap = 1.0 - beta
        abar = s.alpha_bar[1:]
        a = 1.0 / np.sqrt(ap)
        b = -beta / np.sqrt(ap * (1.0 - abar))
        if kind.name == "ddpm":
            nv = beta.copy()
        else:
            nv = np.array([_analytic_dpm_noise_var(kind, s, t) for t in range(1, T + 1)])
    elif kind.name == "ddim":
        a = s.alpha[:-1] / s.alpha[1:]
        b = s.sigma[:-1] - a * s.sigma[1:]
        nv = np.zeros(T)
    else:
        raise ValueError(f"no first-order coefficient arrays for kind {kind.name!r}")
    return np.concatenate([pad, a]), np.concatenate([pad, b]), np.concatenate([pad, nv])


def _analytic_dpm_noise_var(kind: SamplerKind, s: NoiseSchedule, t: int) -> float:
    beta_t = s.beta_at(t)
    ap_t = 1.0 - beta_t
    abar_t = s.alpha_bar[t]
    abar_prev = s.alpha_bar[t - 1]
    lam_sq = (1.0 - abar_prev) / (1.0 - abar_t) * beta_t
    inner = max((1.0 - abar_prev) - lam_sq, 0.0)
    spread = math.sqrt((1.0 - abar_t) / ap_t) - math.sqrt(inner)
    noise = lam_sq + spread * spread * (1.0 - (1.0 - abar_t) * kind.gamma_at(t))
    if noise < -1e-12:
        raise ScheduleError(f"analytic_dpm injected variance negative at t={t}")
    return max(noise, 0.0)


def step_coeffs(kind: SamplerKind, s: NoiseSchedule, t: int) -> StepCoeffs:
    """Linear update coefficients for step t (t >= 2 for dpm_solver2)."""
    s._check_step(t)
    name = kind.name
    if name == "euler_sde":
        f_t = float(s.f_grid[t])
        g2 = float(s.g_sq_grid[t])
        return StepCoeffs(a=1.0 - f_t, b=-g2 / float(s.sigma[t]), noise_var=g2)
    if name in ("ddpm", "analytic_dpm"):
        beta_t = s.beta_at(t)
        ap_t = 1.0 - beta_t
        abar_t = s.alpha_bar[t]
        a = 1.0 / math.sqrt(ap_t)
        b = -beta_t / math.sqrt(ap_t * (1.0 - abar_t))
        noise = beta_t if name == "ddpm" else _analytic_dpm_noise_var(kind, s, t)
        return StepCoeffs(a=a, b=b, noise_var=noise)
    if name == "ddim":
        a = float(s.alpha[t - 1] / s.alpha[t])
        b = float(s.sigma[t - 1] - a * s.sigma[t])
        return StepCoeffs(a=a, b=b, noise_var=0.0)
    if name == "dpm_solver2":
        c = solver2_coeffs(s, t)
        return StepCoeffs(a=c.a, b=c.b, noise_var=0.0)
    raise ValueError(f"unknown sampler kind {name!r}")


def solver2_coeffs(s: NoiseSchedule, t: int) -> Solver2Coeffs:
    if t < 2:
        raise ScheduleError("second-order step needs t >= 2 (half-log-SNR diverges at t=0)")
    lam_prev = s.half_log_snr(t - 1)
    lam_t = s.half_log_snr(t)
    h = lam_prev - lam_t
    s_t = s.solver2_midpoint(t)
    alpha_t = float(s.alpha[t])
    a = float(s.alpha[t - 1]) / alpha_t
    b = -float(s.sigma[t - 1]) * math.expm1(h)
    a_mid = s.alpha_at(s_t) / alpha_t
    b_mid = -s.sigma_at(s_t) * math.expm1(0.5 * h)
    return Solver2Coeffs(t=t, s_t=s_t, a=a, b=b, a_mid=a_mid, b_mid=b_mid, h=h)


def advance(coef: StepCoeffs, x: np.ndarray, eps: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
    """One affine update; the noise term is only added when noise_var > 0."""
    out = coef.a * x + coef.b * eps
    if coef.noise_var > 0.0:
        if z is None:
            raise ValueError("stochastic update requires injected noise z")
        out = out + math.sqrt(coef.noise_var) * z
    return out


def vanilla_sample(
    model,
    s: NoiseSchedule,
    kind: SamplerKind,
    x_start: np.ndarray,
    t_start: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Plain sampling without any posterior uncertainty.

    model needs only .predict(x, t). For stochastic kinds, injected noise is
    drawn from rng; with rng=None the update follows the noise-free mean path
    (used when denoising resampled or perturbed states deterministically).
    """
    t_start = s.num_steps if t_start is None else int(t_start)
    if not 1 <= t_start <= s.num_steps:
        raise ScheduleError(f"t_start {t_start} outside 1..{s.num_steps}")
    x = np.array(x_start, dtype=np.float64, copy=True)
    if kind.name == "dpm_solver2":
        for t in range(t_start, 1, -1):
            c2 = solver2_coeffs(s, t)
            eps_t = model.predict(x, t)
            x_mid = c2.a_mid * x + c2.b_mid * eps_t
            eps_mid = model.predict(x_mid, c2.s_t)
            x = c2.a * x + c2.b * eps_mid
        coef = step_coeffs(SamplerKind("ddim"), s, 1)
        return advance(coef, x, model.predict(x, 1))
    a_arr, b_arr, nv_arr = step_coeff_arrays(kind, s)
    for t in range(t_start, 0, -1):
        eps = model.predict(x, t)
        x = a_arr[t] * x + b_arr[t] * eps
        if nv_arr[t] > 0.0 and rng is not None:
            x = x + math.sqrt(nv_arr[t]) * rng.standard_normal(x.shape)
        # with rng=None a stochastic kind follows the noise-free mean path
    return x
