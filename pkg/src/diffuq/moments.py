"""Pixel-wise uncertainty propagation through reverse-diffusion sampling.

One run tracks, alongside the realized trajectory x_t, the per-pixel moments
E(x_t), Var(x_t) and Cov(x_t, eps_t) of the marginal law induced by sampling
eps_t from the Gaussian posterior predictive at every step. Since each step
is affine, x_{t-1} = a x_t + b eps_t + noise, the moments obey

    E(x_{t-1})   = a E(x_t) + b E(eps_t)
    Var(x_{t-1}) = a^2 Var(x_t) + 2ab Cov(x_t, eps_t) + b^2 Var(eps_t) + noise_var

with the cross term carrying the factor 2 of the general variance identity.
The eps moments are estimated from S Monte-Carlo draws x_{t,i} sampled from
N(E(x_t), Var(x_t)) (antithetic pairs, for variance reduction that keeps the
mean estimate exact on affine predictors):

    Cov(x_t, eps_t)  ~ mean_i(x_i * eps(x_i)) - E(x_t) * mean_i eps(x_i)
    E(eps_t)         ~ mean_i eps(x_i)
    Var(eps_t)       ~ var_i(eps(x_i)) + mean_i gamma2(x_i)   (law of total variance)

Draws for step t-1 are taken right after the moment update of step t, so each
first-order step consumes exactly 1 + S network evaluations. The skip variant
runs the draw block only on a pre-declared subset of steps and treats the
noise prediction as a constant elsewhere (zero covariance and zero predictive
variance), cutting the cost to one evaluation on skipped steps.

The second-order solver threads a midpoint state inside each step; its
covariance Cov(x_t, eps_mid) is estimated by a two-stage scheme: draw x_{t,i}
from the moment Gaussian, push each through the conditional midpoint law
(mean from its own noise prediction, variance from its predictive variance),
and evaluate the network at the midpoints. That costs 2 + 2S evaluations per
step. A second-order step into t = 0 is impossible (the half-log-SNR diverges
there), so solver-2 chains finish with a first-order (ddim) step.

For verification, every Monte-Carlo estimate can be replaced by an
exact-statistics provider (closed forms for affine predictors); the engine is
then a deterministic recursion comparable to the closed-form oracle at
floating-point accuracy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrayio import load_arrays, save_arrays
from .laplace import PredictiveMoments
from .samplers import (
    FIRST_ORDER_KINDS,
    SamplerKind,
    Solver2Coeffs,
    StepCoeffs,
    advance,
    solver2_coeffs,
    step_coeff_arrays,
    step_coeffs,
)
from .schedule import NoiseSchedule
from .seeding import child_rng, child_seed

__all__ = [
    "MomentState",
    "SkipSchedule",
    "GenerationResult",
    "TrajectoryRecord",
    "iterate_expectation",
    "iterate_variance",
    "estimate_cov_mc",
    "estimate_analytic_gamma",
    "precompute_gamma",
    "step_dpm_solver2",
    "run_bayesdiff",
    "run_bayesdiff_skip",
    "nfe_formula",
    "append_results_csv",
]


@dataclass
class MomentState:
    """State at step t: realized sample plus propagated per-pixel moments."""

    t: int
    sample: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    cov_x_eps: np.ndarray


@dataclass(frozen=True)
class SkipSchedule:
    """Sorted nonempty subset of {1..T} on which uncertainty is quantified."""

    steps: tuple[int, ...]
    num_steps: int
    descriptor: str

    def __post_init__(self):
        steps = tuple(sorted(set(int(t) for t in self.steps)))
        if not steps:
            raise ValueError("skip schedule must be nonempty")
        if steps[0] < 1 or steps[-1] > self.num_steps:
            raise ValueError(f"skip steps must lie in 1..{self.num_steps}")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "_members", frozenset(steps))

    def __contains__(self, t: int) -> bool:
        return t in self._members

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def every(cls, num_steps: int, interval: int) -> "SkipSchedule":
        """Evenly spaced steps {1, 1+k, 1+2k, ...}; interval 1 covers the grid."""
        if interval < 1:
            raise ValueError("interval must be >= 1")
        return cls(
            steps=tuple(range(1, num_steps + 1, interval)),
            num_steps=num_steps,
            descriptor=f"interval:{interval}",
        )

    @classmethod
    def full(cls, num_steps: int) -> "SkipSchedule":
        return cls.every(num_steps, 1)


@dataclass
class GenerationResult:
    x0: np.ndarray
    var0: np.ndarray
    image_uncertainty: float
    nfe_count: int
    clamp_count: int
    seed: int
    kind_name: str
    skip_desc: str
    mc_size: int


@dataclass
class TrajectoryRecord:
    """Full per-step history; arrays are indexed by the step t = 0..T.

    sample/mean/var/cov_x_eps row t is the state at step t; eps_mean/eps_var
    row t is the marginal noise-prediction law consumed by the update at t
    (row 0 holds the final covariance block of the full algorithm).
    """

    kind_name: str
    skip_desc: str
    mc_size: int
    seed: int
    nfe_count: int
    clamp_count: int
    schedule_beta: np.ndarray
    sample: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    cov_x_eps: np.ndarray
    eps_mean: np.ndarray
    eps_var: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.sample.shape[0] - 1

    def state_at(self, t: int) -> MomentState:
        return MomentState(
            t=t,
            sample=self.sample[t],
            mean=self.mean[t],
            var=self.var[t],
            cov_x_eps=self.cov_x_eps[t],
        )

    def states(self):
        """Snapshots in generation order t = T..0 (timesteps strictly decreasing)."""
        return [self.state_at(t) for t in range(self.num_steps, -1, -1)]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "kind": self.kind_name,
            "skip_desc": self.skip_desc,
            "S": self.mc_size,
            "seed": self.seed,
            "nfe_count": self.nfe_count,
            "clamp_count": self.clamp_count,
            "schedule": {"num_steps": int(self.schedule_beta.size), "beta": self.schedule_beta.tolist()},
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
        save_arrays(
            directory / "trajectory.bin",
            {
                "sample": self.sample,
                "mean": self.mean,
                "var": self.var,
                "cov_x_eps": self.cov_x_eps,
                "eps_mean": self.eps_mean,
                "eps_var": self.eps_var,
            },
        )

    @classmethod
    def load(cls, directory: str | Path) -> "TrajectoryRecord":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        arrays, _ = load_arrays(directory / "trajectory.bin")
        return cls(
            kind_name=meta["kind"],
            skip_desc=meta["skip_desc"],
            mc_size=int(meta["S"]),
            seed=int(meta["seed"]),
            nfe_count=int(meta["nfe_count"]),
            clamp_count=int(meta["clamp_count"]),
            schedule_beta=np.asarray(meta["schedule"]["beta"], dtype=np.float64),
            **arrays,
        )


# ---------------------------------------------------------------------------
# iteration rules
# ---------------------------------------------------------------------------


def iterate_expectation(
    state: MomentState, pred: PredictiveMoments, kind: SamplerKind, s: NoiseSchedule
) -> np.ndarray:
    """E(x_{t-1}) from the kind's linear rule in (E(x_t), E(eps))."""
    coef = step_coeffs(kind, s, state.t)
    return coef.a * state.mean + coef.b * pred.mean


def _variance_update_raw(
    a: float, b: float, noise_var: float, var: np.ndarray, cov: np.ndarray, eps_var: np.ndarray
) -> tuple[np.ndarray, int]:
    out = (a * a) * var
    out += (2.0 * a * b) * cov
    out += (b * b) * eps_var
    if noise_var != 0.0:
        out += noise_var
    n_clamped = int(np.count_nonzero(out < 0.0))
    if n_clamped:
        np.clip(out, 0.0, None, out=out)
    return out, n_clamped


def _variance_update(
    coef: StepCoeffs, var: np.ndarray, cov: np.ndarray, eps_var: np.ndarray
) -> tuple[np.ndarray, int]:
    return _variance_update_raw(coef.a, coef.b, coef.noise_var, var, cov, eps_var)


def iterate_variance(
    state: MomentState, pred: PredictiveMoments, kind: SamplerKind, s: NoiseSchedule
) -> np.ndarray:
    """Var(x_{t-1}); negative entries from MC noise are clamped to zero."""
    coef = step_coeffs(kind, s, state.t)
    out, _ = _variance_update(coef, state.var, state.cov_x_eps, pred.variance)
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo estimators
# ---------------------------------------------------------------------------


def _antithetic_deviations(shape: tuple, n: int, rng: np.random.Generator) -> np.ndarray:
    """n standard-normal fields in +/- pairs (odd n gets one unpaired draw)."""
    half = n // 2
    g = rng.standard_normal((half, *shape))
    parts = [g, -g]
    if n % 2:
        parts.append(rng.standard_normal((1, *shape)))
    return np.concatenate(parts, axis=0)


def estimate_cov_mc(
    mean: np.ndarray,
    var: np.ndarray,
    net,
    t,
    S: int = 10,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pixel-wise Cov(x_t, eps_t) by MC over x_i ~ N(mean, diag var).

    net needs only .predict. Consumes exactly S network evaluations. With
    var identically zero every draw equals the mean and the estimate is
    exactly zero.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if mean.shape != var.shape:
        raise ValueError("mean/var shapes differ")
    if np.any(var < 0.0):
        raise ValueError("var must be nonnegative")
    if rng is None:
        rng = child_rng(seed, "cov-mc")
    draws = mean[None] + np.sqrt(var)[None] * _antithetic_deviations(mean.shape, S, rng)
    eps = net.predict(draws, t)
    # centered evaluation of (1/S) sum x_i eps_i - mean * (1/S) sum eps_i:
    # algebraically identical, and exactly zero when every draw equals the mean
    return ((draws - mean[None]) * eps).mean(axis=0)


def _cov_block(model, mean, var, t, S, rng):
    """Covariance plus marginal eps moments from one draw set at (mean, var, t)."""
    draws = mean[None] + np.sqrt(var)[None] * _antithetic_deviations(mean.shape, S, rng)
    m, g2 = model.predictive(draws, t)
    inv_s = 1.0 / S
    eps_mean = np.add.reduce(m, axis=0) * inv_s
    cov = np.add.reduce((draws - mean[None]) * m, axis=0) * inv_s
    eps_var = np.add.reduce(g2, axis=0) * inv_s
    # the x-induced spread of the predictions is exactly zero for a
    # degenerate state (all draws coincide); skip the float-dust estimate
    if S >= 2 and np.any(var > 0.0):
        dev = m - eps_mean
        eps_var = eps_var + np.add.reduce(dev * dev, axis=0) / (S - 1)
    return cov, eps_mean, eps_var


def _solver2_block(model, mean, var, c2: Solver2Coeffs, S, rng_draw, rng_mid):
    """Two-stage MC for Cov(x_t, eps_mid) plus the midpoint eps moments."""
    x_i = mean[None] + np.sqrt(var)[None] * _antithetic_deviations(mean.shape, S, rng_draw)
    m_i, g_i = model.predictive(x_i, c2.t)
    mid_std = abs(c2.b_mid) * np.sqrt(g_i)
    zeta = _antithetic_deviations(mean.shape, S, rng_mid)
    x_mid = c2.a_mid * x_i + c2.b_mid * m_i + mid_std * zeta
    ms_i, gs_i = model.predictive(x_mid, c2.s_t)
    eps_mean = ms_i.mean(axis=0)
    cov = ((x_i - mean[None]) * ms_i).mean(axis=0)
    eps_var = gs_i.mean(axis=0)
    degenerate = not (np.any(var > 0.0) or np.any(g_i > 0.0))
    if S >= 2 and not degenerate:
        eps_var = eps_var + ms_i.var(axis=0, ddof=1)
    return cov, eps_mean, eps_var


def estimate_analytic_gamma(net, data, s: NoiseSchedule, t: int, M: int = 256, seed: int = 0) -> float:
    """Dataset-averaged squared score norm per dimension at step t.

    x_{t,m} are forward diffusions of dataset samples; the score is
    -eps(x, t)/sigma_t.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    s._check_step(t)
    rng = child_rng(seed, f"gamma:{t}")
    n = data.samples.shape[0]
    idx = rng.integers(0, n, size=M)
    shape = data.samples.shape[1:]
    noise = rng.standard_normal((M, *shape))
    x_t = s.alpha[t] * data.samples[idx] + s.sigma[t] * noise
    eps = net.predict(x_t, t)
    score = -eps / s.sigma[t]
    d = int(np.prod(shape))
    return float(np.mean(np.sum(score.reshape(M, -1) ** 2, axis=1)) / d)


def precompute_gamma(net, data, s: NoiseSchedule, M: int = 256, seed: int = 0) -> np.ndarray:
    """Gamma_t for every step, cached once per (net, dataset, schedule)."""
    gamma = np.full(s.num_steps + 1, np.nan)
    for t in range(1, s.num_steps + 1):
        gamma[t] = estimate_analytic_gamma(net, data, s, t, M=M, seed=seed)
    return gamma


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


def nfe_formula(kind_name: str, num_steps: int, S: int, skip: SkipSchedule | None = None) -> int:
    """Closed-form network-evaluation count the run counter must match.

    Full runs include the (recorded) trailing covariance block at t = 0; the
    skip variant draws blocks only for steps t-1 in the schedule, which never
    includes 0.
    """
    T = num_steps
    if kind_name in FIRST_ORDER_KINDS:
        if skip is None:
            return T * (1 + S)
        blocks = sum(1 for t in skip.steps if t <= T - 1)
        return T + S * blocks
    if kind_name == "dpm_solver2":
        if skip is None:
            return 2 * T * (1 + S) - 1
        uq_outer = sum(1 for t in skip.steps if t >= 2)
        return 2 * (T - 1) + 2 * S * uq_outer + 1 + (S if 1 in skip else 0)
    raise ValueError(f"unknown sampler kind {kind_name!r}")


class _Run:
    """Mutable bookkeeping for one generation."""

    def __init__(self, x_T, var_init, num_steps):
        self.x = np.array(x_T, dtype=np.float64, copy=True)
        self.E = self.x.copy()
        self.V = np.full_like(self.x, float(var_init))
        self.nfe = 0
        self.clamps = 0
        shape = (num_steps + 1, *self.x.shape)
        self.rec_sample = np.zeros(shape)
        self.rec_mean = np.zeros(shape)
        self.rec_var = np.zeros(shape)
        self.rec_cov = np.zeros(shape)
        self.rec_eps_mean = np.zeros(shape)
        self.rec_eps_var = np.zeros(shape)

    def record(self, t, cov, eps_mean, eps_var):
        self.rec_sample[t] = self.x
        self.rec_mean[t] = self.E
        self.rec_var[t] = self.V
        self.rec_cov[t] = cov
        self.rec_eps_mean[t] = eps_mean
        self.rec_eps_var[t] = eps_var


def _first_order_loop(run: _Run, kind, model, s, S, seed, skip, exact_stats):
    T = s.num_steps
    zeros = np.zeros_like(run.x)
    # one hashed child stream per noise purpose; consumption order is fixed,
    # so a full-grid skip run replays the full algorithm bit for bit
    rng_pred = child_rng(seed, "pred-noise")
    rng_inject = child_rng(seed, "inject")
    rng_cov = child_rng(seed, "cov-draws")
    a_arr, b_arr, nv_arr = step_coeff_arrays(kind, s)
    # carried eps statistics for the upcoming step; initialized at t = T below
    cov = zeros.copy()
    eps_mean = None
    eps_var = None
    for t in range(T, 0, -1):
        uq = skip is None or t in skip
        mean_t, g2_t = model.predictive(run.x, t)
        run.nfe += 1
        if t == T:
            # initialization: Cov(x_T, eps_T) = 0; with Var(x_T) = 0 the
            # marginal eps law collapses to the realized predictive
            eps_mean, eps_var = mean_t, g2_t
        if uq:
            xi = rng_pred.standard_normal(run.x.shape)
            eps_real = mean_t + np.sqrt(g2_t) * xi
        else:
            eps_real = mean_t
            eps_mean, eps_var, cov = mean_t, zeros, zeros
        run.record(t, cov, eps_mean, eps_var)

        a_t, b_t, nv_t = a_arr[t], b_arr[t], nv_arr[t]
        run.x = a_t * run.x + b_t * eps_real
        if nv_t > 0.0:
            run.x = run.x + math.sqrt(nv_t) * rng_inject.standard_normal(run.x.shape)
        run.E = a_t * run.E + b_t * eps_mean
        run.V, n_cl = _variance_update_raw(a_t, b_t, nv_t, run.V, cov, eps_var)
        run.clamps += n_cl

        draw_next = (skip is None) or (t - 1 in skip)
        if draw_next:
            if exact_stats is not None:
                eps_mean, eps_var, cov = exact_stats.first_order(run.E, run.V, t - 1)
            else:
                cov, eps_mean, eps_var = _cov_block(model, run.E, run.V, t - 1, S, rng_cov)
                run.nfe += S
        else:
            eps_mean, eps_var, cov = zeros, zeros, zeros
    run.record(0, cov, eps_mean, eps_var)


def _solver2_loop(run: _Run, kind, model, s, S, seed, skip, exact_stats):
    T = s.num_steps
    zeros = np.zeros_like(run.x)
    rng_pred = child_rng(seed, "pred-noise")
    rng_pred_mid = child_rng(seed, "pred-noise-mid")
    rng_cov = child_rng(seed, "cov-draws")
    rng_cov_mid = child_rng(seed, "cov-mid")
    for t in range(T, 1, -1):
        uq = skip is None or t in skip
        c2 = solver2_coeffs(s, t)
        mean_t, g2_t = model.predictive(run.x, t)
        run.nfe += 1
        if uq:
            xi = rng_pred.standard_normal(run.x.shape)
            eps_t = mean_t + np.sqrt(g2_t) * xi
        else:
            eps_t = mean_t
        x_mid = c2.a_mid * run.x + c2.b_mid * eps_t
        mean_s, g2_s = model.predictive(x_mid, c2.s_t)
        run.nfe += 1
        if uq:
            xi2 = rng_pred_mid.standard_normal(run.x.shape)
            eps_mid = mean_s + np.sqrt(g2_s) * xi2
        else:
            eps_mid = mean_s

        if uq:
            if exact_stats is not None:
                eps_mean, eps_var, cov = exact_stats.solver2(run.E, run.V, c2)
            else:
                cov, eps_mean, eps_var = _solver2_block(
                    model, run.E, run.V, c2, S, rng_cov, rng_cov_mid
                )
                run.nfe += 2 * S
        else:
            eps_mean, eps_var, cov = eps_mid, zeros, zeros
        run.record(t, cov, eps_mean, eps_var)

        run.x = c2.a * run.x + c2.b * eps_mid
        run.E = c2.a * run.E + c2.b * eps_mean
        run.V, n_cl = _variance_update(
            StepCoeffs(a=c2.a, b=c2.b, noise_var=0.0), run.V, cov, eps_var
        )
        run.clamps += n_cl

    # terminal first-order (ddim) step from t = 1
    ddim = SamplerKind("ddim")
    draw = (skip is None) or (1 in skip)
    if draw:
        if exact_stats is not None:
            eps_mean, eps_var, cov = exact_stats.first_order(run.E, run.V, 1)
        else:
            cov, eps_mean, eps_var = _cov_block(model, run.E, run.V, 1, S, rng_cov)
            run.nfe += S
    uq = skip is None or 1 in skip
    mean_1, g2_1 = model.predictive(run.x, 1)
    run.nfe += 1
    if uq:
        xi = rng_pred.standard_normal(run.x.shape)
        eps_real = mean_1 + np.sqrt(g2_1) * xi
    else:
        eps_real = mean_1
        eps_mean, eps_var, cov = mean_1, zeros, zeros
    run.record(1, cov, eps_mean, eps_var)
    coef = step_coeffs(ddim, s, 1)
    run.x = advance(coef, run.x, eps_real)
    run.E = coef.a * run.E + coef.b * eps_mean
    run.V, n_cl = _variance_update(coef, run.V, cov, eps_var)
    run.clamps += n_cl

    if skip is None:
        if exact_stats is not None:
            eps_mean, eps_var, cov = exact_stats.first_order(run.E, run.V, 0)
        else:
            cov, eps_mean, eps_var = _cov_block(model, run.E, run.V, 0, S, rng_cov)
            run.nfe += S
    else:
        eps_mean, eps_var, cov = zeros, zeros, zeros
    run.record(0, cov, eps_mean, eps_var)


def _run(x_T, kind, model, s, S, seed, skip, var_init, exact_stats):
    if S < 1:
        raise ValueError("S must be >= 1")
    if skip is not None and skip.num_steps != s.num_steps:
        raise ValueError("skip schedule was built for a different grid")
    x_T = np.asarray(x_T, dtype=np.float64)
    if not np.all(np.isfinite(x_T)):
        raise ValueError("x_T must be finite")
    run = _Run(x_T, var_init, s.num_steps)
    if kind.name == "dpm_solver2":
        _solver2_loop(run, kind, model, s, S, seed, skip, exact_stats)
    else:
        _first_order_loop(run, kind, model, s, S, seed, skip, exact_stats)

    skip_desc = "full" if skip is None else skip.descriptor
    result = GenerationResult(
        x0=run.x,
        var0=run.V.copy(),
        image_uncertainty=float(run.V.sum()),
        nfe_count=run.nfe,
        clamp_count=run.clamps,
        seed=int(seed),
        kind_name=kind.name,
        skip_desc=skip_desc,
        mc_size=int(S),
    )
    record = TrajectoryRecord(
        kind_name=kind.name,
        skip_desc=skip_desc,
        mc_size=int(S),
        seed=int(seed),
        nfe_count=run.nfe,
        clamp_count=run.clamps,
        schedule_beta=s.beta.copy(),
        sample=run.rec_sample,
        mean=run.rec_mean,
        var=run.rec_var,
        cov_x_eps=run.rec_cov,
        eps_mean=run.rec_eps_mean,
        eps_var=run.rec_eps_var,
    )
    return result, record


def run_bayesdiff(
    x_T: np.ndarray,
    kind: SamplerKind,
    model,
    s: NoiseSchedule,
    S: int = 10,
    seed: int = 0,
    var_init: float = 0.0,
    exact_stats=None,
) -> tuple[GenerationResult, TrajectoryRecord]:
    """Uncertainty quantification on every step.

    model bundles the noise net with its posterior predictive
    (.predict / .predictive). var_init = 1.0 switches to the unconditional
    start used by the continuous-time cross-check; the default conditions on
    the realized x_T. exact_stats, when given, replaces every MC block with
    closed-form statistics (verification mode).
    """
    return _run(x_T, kind, model, s, S, seed, skip=None, var_init=var_init, exact_stats=exact_stats)


def run_bayesdiff_skip(
    x_T: np.ndarray,
    kind: SamplerKind,
    skip: SkipSchedule,
    model,
    s: NoiseSchedule,
    S: int = 10,
    seed: int = 0,
    var_init: float = 0.0,
    exact_stats=None,
) -> tuple[GenerationResult, TrajectoryRecord]:
    """Uncertainty quantification on the declared subset of steps only."""
    if skip is None:
        raise ValueError("skip schedule required; use run_bayesdiff for the full algorithm")
    return _run(x_T, kind, model, s, S, seed, skip=skip, var_init=var_init, exact_stats=exact_stats)


def step_dpm_solver2(
    state: MomentState,
    model,
    s: NoiseSchedule,
    S: int = 10,
    seed: int = 0,
) -> MomentState:
    """One second-order uncertainty step t -> t-1 (t >= 2), standalone."""
    t = state.t
    c2 = solver2_coeffs(s, t)
    mean_t, g2_t = model.predictive(state.sample, t)
    xi = child_rng(seed, "pred-noise", t).standard_normal(state.sample.shape)
    eps_t = mean_t + np.sqrt(g2_t) * xi
    x_mid = c2.a_mid * state.sample + c2.b_mid * eps_t
    mean_s, g2_s = model.predictive(x_mid, c2.s_t)
    xi2 = child_rng(seed, "pred-noise-mid", t).standard_normal(state.sample.shape)
    eps_mid = mean_s + np.sqrt(g2_s) * xi2
    cov, eps_mean, eps_var = _solver2_block(
        model,
        state.mean,
        state.var,
        c2,
        S,
        child_rng(seed, "cov-draws", t),
        child_rng(seed, "cov-mid", t),
    )
    new_x = c2.a * state.sample + c2.b * eps_mid
    new_E = c2.a * state.mean + c2.b * eps_mean
    new_V, _ = _variance_update(StepCoeffs(a=c2.a, b=c2.b, noise_var=0.0), state.var, cov, eps_var)
    return MomentState(t=t - 1, sample=new_x, mean=new_E, var=new_V, cov_x_eps=cov)


def append_results_csv(path: str | Path, results: list[GenerationResult], start_run_id: int = 0) -> None:
    """Append generation rows (run_id, seed, kind, S, skip_desc, score, nfe)."""
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(
                ["run_id", "seed", "kind", "S", "skip_desc", "image_uncertainty", "nfe_count"]
            )
        for i, r in enumerate(results):
            writer.writerow(
                [
                    start_run_id + i,
                    r.seed,
                    r.kind_name,
                    r.mc_size,
                    r.skip_desc,
                    repr(r.image_uncertainty),
                    r.nfe_count,
                ]
            )
