"""Uncertainty iteration: estimators, per-kind rules, runs, and accounting."""

import numpy as np
import pytest

from diffuq.laplace import PredictiveMoments
from diffuq.moments import (
    MomentState,
    SkipSchedule,
    estimate_analytic_gamma,
    estimate_cov_mc,
    iterate_expectation,
    iterate_variance,
    nfe_formula,
    precompute_gamma,
    run_bayesdiff,
    run_bayesdiff_skip,
    step_dpm_solver2,
)
from diffuq.oracle import AffineScoreModel, ExactAffineStats, affine_closed_form
from diffuq.samplers import SamplerKind, solver2_coeffs, step_coeff_arrays, step_coeffs, vanilla_sample
from diffuq.schedule import make_vp_schedule
from diffuq.score_model import Dataset, init_scorenet, synth_dataset

T = 100
S100 = make_vp_schedule(1e-4, 0.02, T)
X_T = np.array([[[0.7, -1.2]]])


def affine(a=0.1, b=0.05, g2=0.09):
    return AffineScoreModel(a=a, b=b, gamma_sq=g2, num_steps=T)


def analytic_kind(s):
    gamma = np.concatenate([[np.nan], 0.5 / (1.0 - s.alpha_bar[1:])])
    return SamplerKind("analytic_dpm", gamma=gamma)


ALL = [SamplerKind("euler_sde"), SamplerKind("ddpm"), analytic_kind(S100), SamplerKind("ddim"), SamplerKind("dpm_solver2")]


# -- covariance estimator -----------------------------------------------------


def test_cov_mc_zero_variance_is_exactly_zero():
    model = affine()
    mean = np.array([[[0.3, -0.8]]])
    cov = estimate_cov_mc(mean, np.zeros_like(mean), model, 10, S=10, seed=0)
    assert np.all(cov == 0.0)


def test_cov_mc_affine_closed_form():
    # for eps = a x + b the covariance is exactly a * var
    model = affine(a=0.4, b=-0.2, g2=0.0)
    mean = np.array([[[0.3, -0.8]]])
    var = np.array([[[0.5, 1.5]]])
    est = estimate_cov_mc(mean, var, model, 10, S=10_000, seed=1)
    assert np.max(np.abs(est - 0.4 * var) / (0.4 * var)) < 0.05


def test_cov_mc_validation():
    model = affine()
    mean = np.zeros((1, 1, 2))
    with pytest.raises(ValueError):
        estimate_cov_mc(mean, np.full_like(mean, -1.0), model, 10, S=10)
    with pytest.raises(ValueError):
        estimate_cov_mc(mean, np.zeros_like(mean), model, 10, S=0)


def test_cov_mc_counts_evaluations():
    calls = []

    class Counting:
        def predict(self, x, t):
            calls.append(x.shape[0])
            return np.zeros_like(x)

    mean = np.zeros((1, 1, 2))
    estimate_cov_mc(mean, np.ones_like(mean), Counting(), 10, S=7, seed=0)
    assert sum(calls) == 7


# -- iteration rules ----------------------------------------------------------


def test_iterate_ddim_zeros():
    state = MomentState(t=50, sample=np.zeros((1, 1, 2)), mean=np.zeros((1, 1, 2)),
                        var=np.zeros((1, 1, 2)), cov_x_eps=np.zeros((1, 1, 2)))
    pred = PredictiveMoments(mean=np.zeros((1, 1, 2)), variance=np.zeros((1, 1, 2)))
    assert np.all(iterate_expectation(state, pred, SamplerKind("ddim"), S100) == 0.0)
    assert np.all(iterate_variance(state, pred, SamplerKind("ddim"), S100) == 0.0)


def test_iterate_ddim_coefficients_by_hand():
    t = 37
    a_hand = S100.alpha[t - 1] / S100.alpha[t]
    b_hand = S100.sigma[t - 1] - a_hand * S100.sigma[t]
    state = MomentState(t=t, sample=np.zeros((1, 1, 1)), mean=np.ones((1, 1, 1)),
                        var=np.zeros((1, 1, 1)), cov_x_eps=np.zeros((1, 1, 1)))
    pred = PredictiveMoments(mean=np.full((1, 1, 1), 2.0), variance=np.zeros((1, 1, 1)))
    out = iterate_expectation(state, pred, SamplerKind("ddim"), S100)
    assert abs(out[0, 0, 0] - (a_hand * 1.0 + b_hand * 2.0)) < 1e-14


def test_iterate_variance_zero_state_gives_injected_noise():
    zero = np.zeros((1, 1, 1))
    for kind, expected in [
        (SamplerKind("ddpm"), S100.beta_at(42)),
        (SamplerKind("euler_sde"), float(S100.g_sq_grid[42])),
        (SamplerKind("ddim"), 0.0),
    ]:
        state = MomentState(t=42, sample=zero, mean=zero, var=zero, cov_x_eps=zero)
        pred = PredictiveMoments(mean=zero, variance=zero)
        out = iterate_variance(state, pred, kind, S100)
        assert abs(out[0, 0, 0] - expected) < 1e-15


def test_single_step_ddpm_variance_structure():
    # from a zero-variance state: Var = beta_1^2/(ap_1 (1-abar_1)) * v + beta_1
    v = 0.37
    coef = step_coeffs(SamplerKind("ddpm"), S100, 1)
    beta1 = S100.beta_at(1)
    ap1 = 1.0 - beta1
    abar1 = S100.alpha_bar[1]
    expected = beta1**2 / (ap1 * (1.0 - abar1)) * v + beta1
    zero = np.zeros((1, 1, 1))
    state = MomentState(t=1, sample=zero, mean=zero, var=zero, cov_x_eps=zero)
    pred = PredictiveMoments(mean=zero, variance=np.full((1, 1, 1), v))
    out = iterate_variance(state, pred, SamplerKind("ddpm"), S100)
    assert abs(out[0, 0, 0] - expected) < 1e-14
    assert abs(coef.b * coef.b * v + coef.noise_var - expected) < 1e-14


def test_solver2_outer_coefficient_identity():
    # the eps_mid coefficient equals -sigma_{t-1} (e^h - 1)
    for t in (2, 30, 77, 100):
        c2 = solver2_coeffs(S100, t)
        h = S100.half_log_snr(t - 1) - S100.half_log_snr(t)
        assert abs(c2.h - h) < 1e-12
        assert abs(c2.b - (-S100.sigma[t - 1] * (np.exp(h) - 1.0))) < 1e-12
        assert abs(c2.a - S100.alpha[t - 1] / S100.alpha[t]) < 1e-15
        # midpoint stage: coefficient of eps_t is -sigma_mid (e^{h/2} - 1)
        assert abs(c2.b_mid - (-S100.sigma_at(c2.s_t) * (np.exp(h / 2.0) - 1.0))) < 1e-12


def test_scalar_and_array_coefficients_agree_bitwise():
    for kind in ALL[:4]:
        a, b, nv = step_coeff_arrays(kind, S100)
        for t in (1, 13, 99, 100):
            c = step_coeffs(kind, S100, t)
            assert (c.a, c.b, c.noise_var) == (a[t], b[t], nv[t])


def test_analytic_dpm_injected_noise_positive_and_bounded():
    kind = analytic_kind(S100)
    _, _, nv = step_coeff_arrays(kind, S100)
    assert np.all(nv[1:] >= 0.0)
    # with Gamma = 0 the analytic variance is an upper bound on these values
    zero_gamma = SamplerKind("analytic_dpm", gamma=np.zeros(T + 1))
    _, _, nv0 = step_coeff_arrays(zero_gamma, S100)
    assert np.all(nv[1:] <= nv0[1:] + 1e-15)


# -- analytic-dpm gamma -------------------------------------------------------


def test_gamma_zero_network():
    model = affine(a=0.0, b=0.0, g2=0.0)
    data = synth_dataset("two-mode-gaussian", 16, seed=0, shape=(1, 1, 2))
    assert estimate_analytic_gamma(model, data, S100, 50, M=32, seed=0) == 0.0


def test_gamma_quadratic_in_score():
    data = synth_dataset("two-mode-gaussian", 16, seed=0, shape=(1, 1, 2))
    g1 = estimate_analytic_gamma(affine(a=0.3, b=0.1, g2=0.0), data, S100, 50, M=64, seed=0)
    g2 = estimate_analytic_gamma(affine(a=0.6, b=0.2, g2=0.0), data, S100, 50, M=64, seed=0)
    assert abs(g2 - 4.0 * g1) < 1e-12 * max(1.0, abs(g2))


def test_gamma_matches_gaussian_closed_form():
    """For q = N(mu, v I) the optimal noise predictor is affine and the
    squared score norm per dimension has a closed-form expectation."""
    mu, v = 0.3, 0.4
    d = 4
    n = 2000
    rng = np.random.default_rng(3)
    samples = (mu + np.sqrt(v) * rng.standard_normal((n, 1, 1, d)))
    data = Dataset(samples=samples, descriptor={"kind": "gauss", "n": n, "seed": 3, "shape": [1, 1, d]})
    t = 60
    a_t, sig_t = S100.alpha[t], S100.sigma[t]
    denom = a_t**2 * v + sig_t**2
    model = AffineScoreModel(a=sig_t / denom, b=-sig_t * a_t * mu / denom, gamma_sq=0.0, num_steps=T)
    # score = -eps/sigma has E||s||^2/d = 1/denom for the exact predictor
    expected = 1.0 / denom
    est = estimate_analytic_gamma(model, data, S100, t, M=4096, seed=5)
    se = expected * np.sqrt(2.0 / (4096 * d))  # chi-square-ish spread
    assert abs(est - expected) < 3.0 * se * 2.0

    gam = precompute_gamma(model, data, S100, M=16, seed=0)
    assert np.isnan(gam[0]) and np.all(np.isfinite(gam[1:]))


# -- full runs ----------------------------------------------------------------


def test_seeded_determinism():
    model = affine()
    for kind in (SamplerKind("ddim"), SamplerKind("dpm_solver2")):
        r1, _ = run_bayesdiff(X_T, kind, model, S100, S=6, seed=21)
        r2, _ = run_bayesdiff(X_T, kind, model, S100, S=6, seed=21)
        assert np.array_equal(r1.x0, r2.x0) and np.array_equal(r1.var0, r2.var0)
        r3, _ = run_bayesdiff(X_T, kind, model, S100, S=6, seed=22)
        assert not np.array_equal(r1.x0, r3.x0)


@pytest.mark.parametrize("name", ["ddim", "dpm_solver2"])
def test_degenerate_posterior_reduces_to_vanilla(name):
    model = AffineScoreModel(a=0.3, b=0.05, gamma_sq=0.0, num_steps=T)
    kind = SamplerKind(name)
    res, _ = run_bayesdiff(X_T, kind, model, S100, S=5, seed=3)
    assert np.array_equal(res.x0, vanilla_sample(model, S100, kind, X_T))
    assert np.all(res.var0 == 0.0)
    assert res.clamp_count == 0


def test_exact_stats_match_closed_form_every_kind():
    model = affine()
    stats = ExactAffineStats(model)
    for kind in ALL:
        cf_mean, cf_var = affine_closed_form(model, kind, S100, X_T)
        res, rec = run_bayesdiff(X_T, kind, model, S100, S=3, seed=1, exact_stats=stats)
        assert np.max(np.abs(rec.mean[0] - cf_mean)) < 1e-10 * np.max(np.abs(cf_mean))
        assert np.max(np.abs(res.var0 - cf_var)) < 1e-10 * np.max(cf_var)


def test_monotone_response_to_gamma_scale():
    # scaling the predictive variance up never reduces total output variance
    prev = -1.0
    for c in (0.5, 1.0, 2.0, 4.0):
        model = affine(g2=0.09 * c)
        _, cf_var = affine_closed_form(model, SamplerKind("ddim"), S100, X_T)
        total = float(cf_var.sum())
        assert total > prev
        prev = total


def test_cauchy_schwarz_within_mc_slack():
    model = affine(a=0.3)
    _, rec = run_bayesdiff(X_T, SamplerKind("euler_sde"), model, S100, S=64, seed=2)
    bound = np.sqrt(rec.var * rec.eps_var)
    slack = 10.0 / np.sqrt(64) * np.maximum(bound, 1e-12)
    assert np.all(np.abs(rec.cov_x_eps) <= bound + slack)


def test_trajectory_record_contents_and_round_trip(tmp_path):
    model = affine()
    res, rec = run_bayesdiff(X_T, SamplerKind("ddpm"), model, S100, S=4, seed=9)
    assert rec.sample.shape == (T + 1, 1, 1, 2)
    states = rec.states()
    assert [st.t for st in states] == list(range(T, -1, -1))
    assert np.array_equal(states[0].sample, X_T[:])  # init snapshot
    assert np.array_equal(states[0].mean, X_T[:])
    assert np.all(states[0].var == 0.0) and np.all(states[0].cov_x_eps == 0.0)
    assert np.array_equal(states[-1].sample, res.x0)
    rec.save(tmp_path / "traj")
    loaded = rec.__class__.load(tmp_path / "traj")
    assert loaded.nfe_count == rec.nfe_count
    for field in ("sample", "mean", "var", "cov_x_eps", "eps_mean", "eps_var"):
        assert np.array_equal(getattr(loaded, field), getattr(rec, field))


def test_step_dpm_solver2_op():
    model = affine()
    zero = np.zeros_like(X_T)
    state = MomentState(t=40, sample=X_T.copy(), mean=X_T.copy(), var=np.full_like(X_T, 0.2),
                        cov_x_eps=zero.copy())
    new = step_dpm_solver2(state, model, S100, S=8, seed=4)
    assert new.t == 39
    assert np.all(new.var >= 0.0)
    with pytest.raises(Exception):
        step_dpm_solver2(MomentState(t=1, sample=X_T, mean=X_T, var=zero, cov_x_eps=zero), model, S100, S=4)


# -- skip schedules and accounting ---------------------------------------------


def test_skip_schedule_construction():
    skip = SkipSchedule.every(100, 4)
    assert skip.steps[0] == 1 and skip.steps[-1] == 97 and len(skip) == 25
    assert 5 in skip and 4 not in skip
    assert skip.descriptor == "interval:4"
    with pytest.raises(ValueError):
        SkipSchedule(steps=(), num_steps=100, descriptor="empty")
    with pytest.raises(ValueError):
        SkipSchedule(steps=(0, 4), num_steps=100, descriptor="bad")
    with pytest.raises(ValueError):
        SkipSchedule(steps=(101,), num_steps=100, descriptor="bad")


def test_full_grid_skip_replays_full_algorithm():
    model = affine()
    kind = SamplerKind("ddim")
    r1, t1 = run_bayesdiff(X_T, kind, model, S100, S=6, seed=9)
    r2, t2 = run_bayesdiff_skip(X_T, kind, SkipSchedule.full(T), model, S100, S=6, seed=9)
    assert np.array_equal(r1.x0, r2.x0)
    assert np.array_equal(r1.var0, r2.var0)
    assert np.array_equal(t1.mean, t2.mean)
    # only the recorded trailing block at t=0 differs (skip never draws there)
    assert np.array_equal(t1.var, t2.var)
    assert r1.nfe_count - r2.nfe_count == 6


@pytest.mark.parametrize("Tn,S,k", [(100, 10, 4), (100, 10, 2), (100, 10, 8), (50, 7, 5), (64, 3, 8)])
def test_nfe_accounting_first_order(Tn, S, k):
    s = make_vp_schedule(1e-4, 0.02, Tn)
    model = AffineScoreModel(a=0.1, b=0.0, gamma_sq=0.04, num_steps=Tn)
    skip = SkipSchedule.every(Tn, k)
    for kind in (SamplerKind("ddim"), SamplerKind("euler_sde")):
        res, _ = run_bayesdiff_skip(np.full((1, 1, 2), 0.3), kind, skip, model, s, S=S, seed=0)
        assert res.nfe_count == nfe_formula(kind.name, Tn, S, skip) == Tn + S * len(skip)
        full, _ = run_bayesdiff(np.full((1, 1, 2), 0.3), kind, model, s, S=S, seed=0)
        assert full.nfe_count == nfe_formula(kind.name, Tn, S) == Tn * (1 + S)


def test_nfe_accounting_solver2():
    model = affine()
    res, _ = run_bayesdiff(X_T, SamplerKind("dpm_solver2"), model, S100, S=10, seed=0)
    assert res.nfe_count == nfe_formula("dpm_solver2", T, 10) == 2 * T * (1 + 10) - 1
    skip = SkipSchedule.every(T, 4)
    res2, _ = run_bayesdiff_skip(X_T, SamplerKind("dpm_solver2"), skip, model, S100, S=10, seed=0)
    assert res2.nfe_count == nfe_formula("dpm_solver2", T, 10, skip)


def test_skip_reduction_ratio_reported():
    # T=100, S=10, interval 4: 350 evaluations against 1100 for the full run
    skip = SkipSchedule.every(100, 4)
    full = nfe_formula("ddim", 100, 10)
    fast = nfe_formula("ddim", 100, 10, skip)
    assert (full, fast) == (1100, 350)
    assert full / fast > 3.0


def test_clamp_counter_reports():
    # high gamma with tiny S provokes occasional negative variance updates
    model = affine(a=0.9, g2=2.0)
    res, _ = run_bayesdiff(X_T, SamplerKind("ddim"), model, S100, S=2, seed=12)
    assert res.clamp_count >= 0
    assert np.all(res.var0 >= 0.0)


def test_run_validation():
    model = affine()
    with pytest.raises(ValueError):
        run_bayesdiff(np.full((1, 1, 2), np.nan), SamplerKind("ddim"), model, S100, S=4, seed=0)
    with pytest.raises(ValueError):
        run_bayesdiff(X_T, SamplerKind("ddim"), model, S100, S=0, seed=0)
    with pytest.raises(ValueError):
        run_bayesdiff_skip(X_T, SamplerKind("ddim"), SkipSchedule.every(50, 4), model, S100, S=4, seed=0)
    with pytest.raises(ValueError):
        SamplerKind("not-a-sampler")
