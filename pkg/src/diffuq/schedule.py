"""Discrete variance-preserving noise schedules.

A schedule holds the per-step noise rates beta_t (t = 1..T) of a DDPM-style
forward process and every coefficient the samplers consume:

    abar_t  = prod_{s<=t} (1 - beta_s)          cumulative signal power
    alpha_t = sqrt(abar_t),  sigma_t = sqrt(1 - abar_t)   (VP: alpha^2 + sigma^2 = 1)
    f_t     = d log(alpha_t) / dt                drift rate
    g2_t    = d sigma_t^2 / dt - 2 f_t sigma_t^2 diffusion rate

Grid indexing: derived arrays run over t = 0..T with abar_0 = 1 (so
alpha_0 = 1, sigma_0 = 0 at the data boundary). Continuous-time rates use
unit-step finite differences, central on interior points and one-sided at
the ends, so the per-step reverse update can use them without rescaling.

Fractional times (needed by the second-order solver midpoint) interpolate
log alpha and log sigma linearly between grid points; the half-log-SNR
lambda = log(alpha/sigma) is then piecewise linear and strictly decreasing,
which makes its inverse well defined on [1, T].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScheduleError",
    "NoiseSchedule",
    "make_vp_schedule",
    "drift_coeffs",
    "half_log_snr",
]

# Tolerance under which a finite-difference g^2 may dip negative from
# rounding before it is clamped to zero.
_G_SQ_CLAMP = 1e-12


class ScheduleError(ValueError):
    """Invalid schedule parameters or out-of-range time queries."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable discrete VP schedule; safe to share across workers.

    ``beta`` has length T and refers to steps t = 1..T. All derived arrays
    (``alpha_bar``, ``alpha``, ``sigma``, ``f_grid``, ``g_sq_grid``) are
    indexed by t = 0..T.
    """

    beta: np.ndarray
    alpha_bar: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)
    sigma: np.ndarray = field(init=False, repr=False)
    f_grid: np.ndarray = field(init=False, repr=False)
    g_sq_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 2:
            raise ScheduleError("beta must be a 1-d array with at least 2 steps")
        if not np.all(np.isfinite(beta)):
            raise ScheduleError("beta must be finite")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ScheduleError("beta entries must lie strictly in (0, 1)")
        object.__setattr__(self, "beta", beta)

        abar = np.concatenate([[1.0], np.cumprod(1.0 - beta)])
        if np.any(np.diff(abar) >= 0.0):
            raise ScheduleError("cumulative signal power must decrease strictly")
        alpha = np.sqrt(abar)
        sigma = np.sqrt(1.0 - abar)
        object.__setattr__(self, "alpha_bar", abar)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)

        # Unit-step finite differences of log alpha and sigma^2 over t = 0..T.
        log_alpha = 0.5 * np.log(abar)
        sig_sq = 1.0 - abar
        f = np.empty_like(log_alpha)
        ds = np.empty_like(sig_sq)
        f[1:-1] = 0.5 * (log_alpha[2:] - log_alpha[:-2])
        f[0] = log_alpha[1] - log_alpha[0]
        f[-1] = log_alpha[-1] - log_alpha[-2]
        ds[1:-1] = 0.5 * (sig_sq[2:] - sig_sq[:-2])
        ds[0] = sig_sq[1] - sig_sq[0]
        ds[-1] = sig_sq[-1] - sig_sq[-2]
        g_sq = ds - 2.0 * f * sig_sq
        if np.any(g_sq < -_G_SQ_CLAMP):
            raise ScheduleError("diffusion rate g^2 is negative: corrupt schedule")
        g_sq = np.clip(g_sq, 0.0, None)
        object.__setattr__(self, "f_grid", f)
        object.__setattr__(self, "g_sq_grid", g_sq)

    @property
    def num_steps(self) -> int:
        return int(self.beta.size)

    # -- coefficient lookups -------------------------------------------------

    def beta_at(self, t: int) -> float:
        self._check_step(t)
        return float(self.beta[t - 1])

    def alpha_at(self, u: float) -> float:
        """alpha at a (possibly fractional) time u in [0, T]."""
        u = self._check_time(u)
        if u == int(u):
            return float(self.alpha[int(u)])
        lo = math.floor(u)
        w = u - lo
        log_a = np.log(self.alpha)
        return float(np.exp((1.0 - w) * log_a[lo] + w * log_a[lo + 1]))

    def sigma_at(self, u: float) -> float:
        """sigma at a (possibly fractional) time u; u must be 0 or >= 1."""
        u = self._check_time(u)
        if u == int(u):
            return float(self.sigma[int(u)])
        if u < 1.0:
            raise ScheduleError("sigma is not interpolable on (0, 1): sigma_0 = 0")
        lo = math.floor(u)
        w = u - lo
        log_s = np.log(self.sigma[1:])
        return float(np.exp((1.0 - w) * log_s[lo - 1] + w * log_s[lo]))

    def half_log_snr(self, u: float) -> float:
        """lambda(u) = log(alpha_u / sigma_u); undefined at the t = 0 boundary."""
        u = self._check_time(u)
        if u < 1.0 and u != int(u):
            raise ScheduleError("half-log-SNR undefined for u in (0, 1)")
        if u == 0.0:
            raise ScheduleError("half-log-SNR undefined at t = 0 (sigma_0 = 0)")
        return math.log(self.alpha_at(u)) - math.log(self.sigma_at(u))

    def invert_half_log_snr(self, lam: float, lo: float, hi: float, tol: float = 1e-12) -> float:
        """Bisection solve of half_log_snr(u) = lam on [lo, hi] (lo >= 1)."""
        if not 1.0 <= lo < hi <= self.num_steps:
            raise ScheduleError("inversion bracket must satisfy 1 <= lo < hi <= T")
        f_lo = self.half_log_snr(lo) - lam
        f_hi = self.half_log_snr(hi) - lam
        if f_lo == 0.0:
            return lo
        if f_hi == 0.0:
            return hi
        if f_lo * f_hi > 0.0:
            raise ScheduleError("target half-log-SNR not bracketed by [lo, hi]")
        a, b = lo, hi
        # lambda is strictly decreasing, so f_lo > 0 > f_hi.
        while b - a > tol:
            mid = 0.5 * (a + b)
            if self.half_log_snr(mid) - lam > 0.0:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    def solver2_midpoint(self, t: int) -> float:
        """The fractional step whose half-log-SNR is the [t-1, t] midpoint (t >= 2)."""
        self._check_step(t)
        if t < 2:
            raise ScheduleError("second-order midpoint needs t >= 2")
        lam_mid = 0.5 * (self.half_log_snr(t - 1) + self.half_log_snr(t))
        return self.invert_half_log_snr(lam_mid, t - 1, t)

    # -- validation helpers --------------------------------------------------

    def _check_step(self, t: int) -> None:
        if int(t) != t or not 1 <= t <= self.num_steps:
            raise ScheduleError(f"step index {t} outside 1..{self.num_steps}")

    def _check_time(self, u: float) -> float:
        u = float(u)
        if not 0.0 <= u <= self.num_steps:
            raise ScheduleError(f"time {u} outside [0, {self.num_steps}]")
        return u

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"num_steps": self.num_steps, "beta": self.beta.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        payload = json.loads(text)
        beta = np.asarray(payload["beta"], dtype=np.float64)
        if int(payload["num_steps"]) != beta.size:
            raise ScheduleError("num_steps does not match beta length")
        return cls(beta=beta)


def make_vp_schedule(beta_start: float, beta_end: float, num_steps: int) -> NoiseSchedule:
    """Linear-beta VP schedule on [beta_start, beta_end] with num_steps steps."""
    if int(num_steps) != num_steps or num_steps < 2:
        raise ScheduleError("num_steps must be an integer >= 2")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ScheduleError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, int(num_steps))
    return NoiseSchedule(beta=beta)


def drift_coeffs(s: NoiseSchedule, t: int) -> tuple[float, float]:
    """(f_t, g2_t) at step t in 1..T on the unit-step discrete grid."""
    s._check_step(t)
    return float(s.f_grid[t]), float(s.g_sq_grid[t])


def half_log_snr(s: NoiseSchedule, t: float) -> float:
    """Module-level alias for NoiseSchedule.half_log_snr."""
    return s.half_log_snr(t)
