"""Ensemble oracle and affine closed-form recursion: the two ground truths."""

import numpy as np
import pytest

from diffuq.moments import run_bayesdiff
from diffuq.oracle import AffineScoreModel, ExactAffineStats, affine_closed_form, ensemble_moments
from diffuq.samplers import SamplerKind, vanilla_sample
from diffuq.schedule import make_vp_schedule

T = 100
S100 = make_vp_schedule(1e-4, 0.02, T)
X_T = np.array([[[0.7, -1.2]]])


def affine(a=0.1, b=0.05, g2=0.09):
    return AffineScoreModel(a=a, b=b, gamma_sq=g2, num_steps=T)


def all_kinds():
    gamma = np.concatenate([[np.nan], 0.5 / (1.0 - S100.alpha_bar[1:])])
    return [
        SamplerKind("euler_sde"),
        SamplerKind("ddpm"),
        SamplerKind("analytic_dpm", gamma=gamma),
        SamplerKind("ddim"),
        SamplerKind("dpm_solver2"),
    ]


def test_ensemble_degenerate_ddim():
    model = affine(g2=0.0)
    ens = ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=200, seed=0)
    # identical trajectories; the empirical variance carries only summation dust
    assert np.all(ens.var < 1e-28)
    assert np.allclose(ens.mean, vanilla_sample(model, S100, SamplerKind("ddim"), X_T), rtol=0, atol=1e-12)


def test_ensemble_stderr_clt_scaling():
    model = affine()
    e1 = ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=4000, seed=3)
    e2 = ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=16000, seed=3)
    ratio = e1.stderr_mean / e2.stderr_mean
    assert np.all((ratio > 1.6) & (ratio < 2.4))  # sqrt(4) with estimation noise
    assert np.all(e2.stderr_var < e1.stderr_var)


def test_ensemble_block_splitting_is_order_independent():
    model = affine()
    a = ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=3000, seed=5, block_size=1000)
    b = ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=3000, seed=5, block_size=1000)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.var, b.var)
    with pytest.raises(ValueError):
        ensemble_moments(X_T, SamplerKind("ddim"), model, S100, N=50, seed=0)


@pytest.mark.parametrize("kind", all_kinds(), ids=lambda k: k.name)
def test_closed_form_matches_ensemble(kind):
    model = affine()
    cf_mean, cf_var = affine_closed_form(model, kind, S100, X_T)
    ens = ensemble_moments(X_T, kind, model, S100, N=100_000, seed=7)
    assert np.all(np.abs(cf_mean - ens.mean) < 3.0 * ens.stderr_mean)
    assert np.all(np.abs(cf_var - ens.var) < 3.0 * ens.stderr_var)


def test_zero_gain_decouples_recursion():
    # with a = 0 the eps terms are exogenous: variance accumulates only the
    # per-step gamma and injected-noise contributions with squared-gain weights
    g2 = 0.04
    model = affine(a=0.0, b=0.1, g2=g2)
    kind = SamplerKind("ddpm")
    _, cf_var = affine_closed_form(model, kind, S100, X_T)
    from diffuq.samplers import step_coeff_arrays

    a_arr, b_arr, nv_arr = step_coeff_arrays(kind, S100)
    v = 0.0
    for t in range(T, 0, -1):
        v = a_arr[t] ** 2 * v + b_arr[t] ** 2 * g2 + nv_arr[t]
    assert np.allclose(cf_var, v, rtol=1e-12)


def test_three_way_agreement_tightens_with_s():
    model = affine()
    kind = SamplerKind("euler_sde")
    _, cf_var = affine_closed_form(model, kind, S100, X_T)
    gaps = []
    for S in (10, 100, 10_000):
        res, _ = run_bayesdiff(X_T, kind, model, S100, S=S, seed=17)
        gaps.append(float(np.max(np.abs(res.var0 - cf_var) / cf_var)))
    assert gaps[2] < gaps[0]
    assert gaps[2] < 0.01  # residual MC noise at S = 1e4
    res_exact, _ = run_bayesdiff(X_T, kind, model, S100, S=2, seed=17, exact_stats=ExactAffineStats(model))
    assert np.max(np.abs(res_exact.var0 - cf_var) / cf_var) < 1e-10


def test_per_step_and_per_pixel_parameter_arrays():
    rng = np.random.default_rng(0)
    a = rng.uniform(0.05, 0.15, size=T + 1)
    b = rng.uniform(-0.1, 0.1, size=(T + 1, 1, 1, 2))
    g2 = rng.uniform(0.01, 0.05, size=T + 1)
    model = AffineScoreModel(a=a, b=b, gamma_sq=g2, num_steps=T)
    kind = SamplerKind("ddim")
    cf_mean, cf_var = affine_closed_form(model, kind, S100, X_T)
    res, rec = run_bayesdiff(X_T, kind, model, S100, S=2, seed=1, exact_stats=ExactAffineStats(model))
    assert np.max(np.abs(rec.mean[0] - cf_mean)) < 1e-10 * np.max(np.abs(cf_mean))
    assert np.max(np.abs(res.var0 - cf_var)) < 1e-10 * np.max(cf_var)
    with pytest.raises(ValueError):
        AffineScoreModel(a=np.ones(T), b=0.0, gamma_sq=0.0, num_steps=T)  # wrong length
    with pytest.raises(ValueError):
        AffineScoreModel(a=0.1, b=0.0, gamma_sq=-1.0, num_steps=T)
