"""Command-line front end: train / uq / verify / report.

Configs are flat INI files; every command is a pure function of
(config, seed, existing artifacts). Each output directory stores a hash of
the resolved config and refuses to be reused with a different one, and all
randomness flows through hashed child seeds of the configured master seed,
so reruns are idempotent or append-identical.

Exit codes: 0 success, 1 validation error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .arrayio import save_arrays
from .continuous import QuadratureConfig, l2_rel_gap, var_continuous
from .laplace import PosteriorModel, fit_lastlayer, load_posterior, save_posterior
from .moments import (
    SkipSchedule,
    TrajectoryRecord,
    append_results_csv,
    nfe_formula,
    run_bayesdiff,
    run_bayesdiff_skip,
)
from .oracle import AffineScoreModel, ExactAffineStats, affine_closed_form, ensemble_moments
from .samplers import ALL_KINDS, SamplerKind
from .schedule import NoiseSchedule, make_vp_schedule
from .score_model import init_scorenet, load_checkpoint, save_checkpoint, synth_dataset, train_map
from .seeding import child_rng, child_seed

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or missing configuration fields."""


class VerifyFailure(RuntimeError):
    """One or more oracle comparisons exceeded tolerance."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _load_config(path: str | Path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    return parser


def _require(cfg, section: str, field: str) -> str:
    if not cfg.has_section(section):
        raise ConfigError(f"missing config section [{section}]")
    if not cfg.has_option(section, field):
        raise ConfigError(f"missing config field [{section}] {field}")
    return cfg.get(section, field)


def _get(cfg, section: str, field: str, default: str | None = None) -> str | None:
    if cfg.has_option(section, field):
        return cfg.get(section, field)
    return default


def config_hash(cfg: configparser.ConfigParser) -> str:
    lines = []
    for section in sorted(cfg.sections()):
        for key in sorted(cfg.options(section)):
            lines.append(f"{section}.{key}={cfg.get(section, key)}")
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


def _claim_outdir(out: Path, digest: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "config_hash.txt"
    if marker.exists():
        stored = marker.read_text().strip()
        if stored != digest:
            raise ConfigError(
                f"output dir {out} was produced by a different config "
                f"(hash {stored} != {digest}); refusing to mix artifacts"
            )
    else:
        marker.write_text(digest + "\n")


def _parse_shape(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.lower().split("x")]
    if len(parts) != 3 or any(p < 1 for p in parts):
        raise ConfigError(f"shape must look like 1x4x4, got {text!r}")
    return tuple(parts)


def _schedule_from_config(cfg) -> NoiseSchedule:
    return make_vp_schedule(
        float(_require(cfg, "schedule", "beta_start")),
        float(_require(cfg, "schedule", "beta_end")),
        int(_require(cfg, "schedule", "num_steps")),
    )


def _load_model(out: Path):
    net = load_checkpoint(out / "checkpoint.bin")
    post = load_posterior(out / "posterior.bin")
    return PosteriorModel(net, post)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out if args.out else _require(cfg, "train", "out"))
    digest = config_hash(cfg)

    shape = _parse_shape(_require(cfg, "data", "shape"))
    data = synth_dataset(
        _require(cfg, "data", "kind"),
        int(_require(cfg, "data", "n")),
        int(_require(cfg, "data", "seed")),
        shape,
    )
    s = _schedule_from_config(cfg)
    hidden = tuple(int(h) for h in _require(cfg, "model", "hidden").split(",") if h)
    net = init_scorenet(
        shape,
        hidden_sizes=hidden,
        time_features=int(_get(cfg, "model", "time_features", "4")),
        time_scale=float(_get(cfg, "model", "time_scale", str(s.num_steps))),
        seed=int(_require(cfg, "model", "seed")),
        activation=_get(cfg, "model", "activation", "softplus"),
    )
    weight_decay = float(_require(cfg, "train", "weight_decay"))
    net, losses = train_map(
        net,
        data,
        s,
        weight_decay=weight_decay,
        steps=int(_require(cfg, "train", "steps")),
        seed=int(_require(cfg, "train", "seed")),
        lr=float(_get(cfg, "train", "lr", "5e-3")),
        batch_size=int(_get(cfg, "train", "batch_size", "64")),
    )

    obs_noise_var = float(_get(cfg, "laplace", "obs_noise_var", "1.0"))
    prior = _get(cfg, "laplace", "prior_precision")
    prior_precision = float(prior) if prior else weight_decay / obs_noise_var
    post = fit_lastlayer(
        net,
        data,
        s,
        prior_precision=prior_precision,
        obs_noise_var=obs_noise_var,
        n_fit_points=int(_get(cfg, "laplace", "n_fit_points", "256")),
        seed=int(_get(cfg, "laplace", "seed", "0")),
    )

    _claim_outdir(out, digest)
    save_checkpoint(out / "checkpoint.bin", net)
    save_posterior(out / "posterior.bin", post)
    (out / "dataset.json").write_text(json.dumps(data.descriptor, sort_keys=True))
    (out / "schedule.json").write_text(s.to_json())
    with open(out / "losses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "objective"])
        for i, v in enumerate(losses):
            writer.writerow([i, repr(float(v))])
    if losses.size:
        n_win = max(1, losses.size // 10)
        print(f"trained {len(losses)} steps; objective {losses[:n_win].mean():.4f} -> {losses[-n_win:].mean():.4f}")
    else:
        print("trained 0 steps; checkpoint equals the initialization")
    print(f"artifacts in {out} (config {digest})")
    return 0


# ---------------------------------------------------------------------------
# uq
# ---------------------------------------------------------------------------


def _parse_samplers(text: str, s: NoiseSchedule, model, data) -> list[SamplerKind]:
    kinds = []
    for name in [p.strip() for p in text.split(",") if p.strip()]:
        if name not in ALL_KINDS:
            raise ConfigError(f"unknown sampler {name!r}; expected one of {ALL_KINDS}")
        if name == "analytic_dpm":
            from .moments import precompute_gamma

            gamma = precompute_gamma(model, data, s, M=128, seed=0)
            kinds.append(SamplerKind(name, gamma=gamma))
        else:
            kinds.append(SamplerKind(name))
    return kinds


def cmd_uq(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out if args.out else _require(cfg, "uq", "out"))
    digest = config_hash(cfg)
    _claim_outdir(out, digest)
    for artifact in ("checkpoint.bin", "posterior.bin"):
        if not (out / artifact).exists():
            raise ConfigError(f"{out / artifact} missing; run `diffuq train` first")
    model = _load_model(out)
    s = _schedule_from_config(cfg)
    shape = _parse_shape(_require(cfg, "data", "shape"))
    data = synth_dataset(
        _require(cfg, "data", "kind"),
        int(_require(cfg, "data", "n")),
        int(_require(cfg, "data", "seed")),
        shape,
    )

    samplers = args.samplers if args.samplers else _get(cfg, "uq", "samplers", "ddim")
    kinds = _parse_samplers(samplers, s, model, data)
    S = int(args.s if args.s is not None else _get(cfg, "uq", "s", "10"))
    interval = int(args.skip if args.skip is not None else _get(cfg, "uq", "skip", "4"))
    n_runs = int(args.n if args.n is not None else _get(cfg, "uq", "n", "100"))
    master = int(_get(cfg, "uq", "seed", "0"))
    store_traj = int(_get(cfg, "uq", "store_traj", "0"))
    skip = None if interval == 0 else SkipSchedule.every(s.num_steps, interval)

    results_path = out / "results.csv"
    start_id = 0
    if results_path.exists():
        with open(results_path, newline="") as fh:
            start_id = max(0, sum(1 for _ in fh) - 1)

    all_results = []
    for kind in kinds:
        for i in range(n_runs):
            run_seed = child_seed(master, f"uq-run:{kind.name}", i)
            x_T = child_rng(run_seed, "x_T").standard_normal(shape)
            if skip is None:
                res, rec = run_bayesdiff(x_T, kind, model, s, S=S, seed=run_seed)
            else:
                res, rec = run_bayesdiff_skip(x_T, kind, skip, model, s, S=S, seed=run_seed)
            all_results.append(res)
            if i < store_traj:
                rec.save(out / "traj" / f"{kind.name}_run_{i:05d}")
    append_results_csv(results_path, all_results, start_run_id=start_id)

    table = analysis.UncertaintyTable.from_results(all_results)
    mu, sd, sk = table.summary()
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean", "std", "skewness"])
        writer.writerow([len(table), repr(mu), repr(sd), repr(sk)])
    print(f"{len(all_results)} runs -> {results_path}")
    print(f"image uncertainty: mean {mu:.6g}, std {sd:.6g}, skewness {sk:.3f}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    sec = "verify"
    s = _schedule_from_config(cfg)
    T = s.num_steps
    d = int(_get(cfg, sec, "pixels", "2"))
    a = float(_get(cfg, sec, "a", "0.1"))
    b = float(_get(cfg, sec, "b", "0.05"))
    g2 = float(_get(cfg, sec, "gamma_sq", "0.09"))
    n_ens = int(_get(cfg, sec, "n_ensemble", "100000"))
    S = int(_get(cfg, sec, "s", "64"))
    seed_ens = int(_get(cfg, sec, "seed_ensemble", "7"))
    seed_eng = int(_get(cfg, sec, "seed_engine", "13"))
    exact_tol = float(args.exact_tol)
    z_tol = float(args.z_tol)

    model = AffineScoreModel(a=a, b=b, gamma_sq=g2, num_steps=T)
    stats = ExactAffineStats(model)
    rng = child_rng(seed_ens, "verify-x_T")
    x_T = rng.standard_normal((1, 1, d))
    gamma = np.concatenate([[np.nan], 0.5 / (1.0 - s.alpha_bar[1:])])
    kinds = [
        SamplerKind("euler_sde"),
        SamplerKind("ddpm"),
        SamplerKind("analytic_dpm", gamma=gamma),
        SamplerKind("ddim"),
        SamplerKind("dpm_solver2"),
    ]
    if args.only:
        kinds = [k for k in kinds if k.name == args.only]
        if not kinds:
            raise ConfigError(f"--only {args.only!r} is not a known sampler kind")

    rows = []
    failed = False
    for kind in kinds:
        cf_mean, cf_var = affine_closed_form(model, kind, s, x_T)
        res_exact, rec_exact = run_bayesdiff(x_T, kind, model, s, S=2, seed=1, exact_stats=stats)
        gap_mean = float(np.abs(rec_exact.mean[0] - cf_mean).max() / np.abs(cf_mean).max())
        gap_var = float(np.abs(res_exact.var0 - cf_var).max() / cf_var.max())
        ens = ensemble_moments(x_T, kind, model, s, N=n_ens, seed=seed_ens)
        res_mc, rec_mc = run_bayesdiff(x_T, kind, model, s, S=S, seed=seed_eng)
        z_mean = float((np.abs(rec_mc.mean[0] - ens.mean) / ens.stderr_mean).max())
        z_var = float((np.abs(res_mc.var0 - ens.var) / ens.stderr_var).max())
        ok = gap_mean <= exact_tol and gap_var <= exact_tol and z_mean <= z_tol and z_var <= z_tol
        failed = failed or not ok
        rows.append([kind.name, repr(gap_mean), repr(gap_var), repr(z_mean), repr(z_var), "pass" if ok else "FAIL"])
        print(
            f"{kind.name:14s} exact relgap {max(gap_mean, gap_var):9.2e}  "
            f"z(mean) {z_mean:5.2f}  z(var) {z_var:5.2f}  -> {'pass' if ok else 'FAIL'}"
        )
    if args.out:
        outp = Path(args.out)
        outp.parent.mkdir(parents=True, exist_ok=True)
        with open(outp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "exact_gap_mean", "exact_gap_var", "z_mean", "z_var", "status"])
            writer.writerows(rows)
    if failed:
        raise VerifyFailure("oracle comparisons out of tolerance")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _report_filter(args) -> int:
    table = analysis.UncertaintyTable.from_csv(args.results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.top_frac is not None:
        frac = float(args.top_frac)
        if not 0.0 < frac < 1.0:
            raise ConfigError("--top-frac must lie in (0, 1)")
        order = np.argsort(table.score)
        n_keep = int(round((1.0 - frac) * len(table)))
        kept = order[:n_keep]
        threshold = float(np.sort(table.score)[n_keep - 1]) if n_keep else float("nan")
        kept_fraction = n_keep / len(table)
        rule = f"top-frac:{frac}"
    else:
        fr = analysis.filter_threshold(table)
        kept, threshold, kept_fraction = fr.kept_idx, fr.threshold, fr.kept_fraction
        rule = "mu-plus-sigma"
    with open(out / "filter.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rule", "threshold", "kept_fraction", "n_kept", "n_total"])
        writer.writerow([rule, repr(threshold), repr(kept_fraction), len(kept), len(table)])
    analysis.histogram_csv(out / "histogram.csv", table.score)
    print(f"{rule}: threshold {threshold:.6g}, kept {len(kept)}/{len(table)} ({kept_fraction:.1%})")
    return 0


def _report_quintiles(args) -> int:
    table = analysis.UncertaintyTable.from_csv(args.results)
    groups = analysis.quintile_groups(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "quintiles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "size", "mean_uncertainty"])
        for g, idx in enumerate(groups):
            writer.writerow([g, idx.size, repr(float(table.score[idx].mean()))])
            print(f"group {g}: {idx.size} rows, mean uncertainty {table.score[idx].mean():.6g}")
    return 0


def _report_skip_consistency(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.artifacts if args.artifacts else _require(cfg, "uq", "out"))
    model = _load_model(out_dir)
    s = _schedule_from_config(cfg)
    shape = _parse_shape(_require(cfg, "data", "shape"))
    intervals = [int(v) for v in args.intervals.split(",")]
    seeds = list(range(int(args.seeds)))
    rep = analysis.skip_consistency_report(
        model, s, SamplerKind("ddim"), seeds, intervals, S=int(args.s), shape=shape
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "skip_consistency.csv")
    for i, k in enumerate(rep.intervals):
        print(
            f"interval {k}: spearman {rep.spearman[i]:.3f}, top9 {rep.top_overlap[i]}/9, "
            f"bottom9 {rep.bottom_overlap[i]}/9, nfe {rep.nfe[i]}"
        )
    return 0


def _report_resample(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.artifacts if args.artifacts else _require(cfg, "uq", "out"))
    model = _load_model(out_dir)
    s = _schedule_from_config(cfg)
    traj = TrajectoryRecord.load(args.traj)
    t_star = int(args.t_star) if args.t_star is not None else analysis.default_resample_step(s.num_steps)
    variants = analysis.resample_variants(
        traj, t_star, int(args.n), model, s, SamplerKind("ddim"), seed=int(args.seed)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_arrays(out / "variants.f64", {"variants": variants})
    flat = variants.reshape(variants.shape[0], -1)
    d = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=-1)
    spread = float(d[np.triu_indices(len(flat), 1)].mean()) if len(flat) > 1 else 0.0
    with open(out / "resample.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_star", "n", "mean_pairwise_distance"])
        writer.writerow([t_star, len(flat), repr(spread)])
    print(f"resampled {len(flat)} variants at t*={t_star}; mean pairwise distance {spread:.6g}")
    return 0


def _report_adjacent(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.artifacts if args.artifacts else _require(cfg, "uq", "out"))
    model = _load_model(out_dir)
    s = _schedule_from_config(cfg)
    shape = _parse_shape(_require(cfg, "data", "shape"))
    eta = float(args.eta)
    skip = SkipSchedule.every(s.num_steps, 4)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(int(args.seeds)):
        seed = child_seed(int(args.seed), "adjacent-base", i)
        x_T = child_rng(seed, "x_T").standard_normal(shape)
        res, _ = run_bayesdiff_skip(x_T, SamplerKind("ddim"), skip, model, s, S=10, seed=seed)
        variants = analysis.adjacent_generations(
            x_T, eta, int(args.n), model, s, SamplerKind("ddim"), seed=seed
        )
        flat = variants.reshape(len(variants), -1)
        d = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=-1)
        spread = float(d[np.triu_indices(len(flat), 1)].mean())
        rows.append([i, repr(res.image_uncertainty), repr(spread)])
    with open(out / "adjacent.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["base_seed_idx", "image_uncertainty", "mean_pairwise_distance"])
        writer.writerows(rows)
    from scipy.stats import spearmanr

    scores = np.array([float(r[1]) for r in rows])
    spreads = np.array([float(r[2]) for r in rows])
    rho = float(spearmanr(scores, spreads).statistic)
    print(f"adjacent-generation diversity over {len(rows)} seeds (eta={eta}): spearman {rho:+.3f}")
    return 0


def _report_continuous(args) -> int:
    cfg = _load_config(args.config)
    s = _schedule_from_config(cfg)
    T = s.num_steps
    lo, hi = args.interval.split(",")
    i = int(lo)
    j = T if hi.strip().upper() == "T" else int(hi)
    sec = "verify"
    model = AffineScoreModel(
        a=float(_get(cfg, sec, "a", "0.1")),
        b=float(_get(cfg, sec, "b", "0.05")),
        gamma_sq=float(_get(cfg, sec, "gamma_sq", "0.09")),
        num_steps=T,
    )
    stats = ExactAffineStats(model)
    d = int(_get(cfg, sec, "pixels", "2"))
    x_T = child_rng(1, "continuous-x_T").standard_normal((1, 1, d))
    res, rec = run_bayesdiff(
        x_T, SamplerKind("euler_sde"), model, s, S=2, seed=1, var_init=1.0, exact_stats=stats
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "continuous_check.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval_i", "interval_j", "l2_rel_gap", "rule"])
        for rule in ("trapezoid", "midpoint"):
            approx = var_continuous(rec, s, QuadratureConfig(rule), i, j)
            gap = l2_rel_gap(rec.var[i], approx)
            writer.writerow([i, j, repr(gap), rule])
            print(f"[{i}, {j}] {rule}: discrete vs quadrature relative gap {gap:.4f}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffuq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the toy noise model and fit its posterior")
    p_train.add_argument("config")
    p_train.add_argument("--out", default=None)
    p_train.set_defaults(func=cmd_train)

    p_uq = sub.add_parser("uq", help="generate with pixel-wise uncertainty")
    p_uq.add_argument("config")
    p_uq.add_argument("--samplers", default=None, help="comma-separated sampler kinds")
    p_uq.add_argument("--s", type=int, default=None, help="Monte-Carlo draw count per block")
    p_uq.add_argument("--skip", type=int, default=None, help="skip interval; 0 = full algorithm")
    p_uq.add_argument("--n", type=int, default=None, help="number of generations per sampler")
    p_uq.add_argument("--out", default=None)
    p_uq.set_defaults(func=cmd_uq)

    p_verify = sub.add_parser("verify", help="three-way oracle comparison on the affine model")
    p_verify.add_argument("config")
    p_verify.add_argument("--only", default=None, help="restrict to one sampler kind")
    p_verify.add_argument("--exact-tol", default="1e-10")
    p_verify.add_argument("--z-tol", default="3.0")
    p_verify.add_argument("--out", default=None, help="write the report CSV here")
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="post-hoc analyses over stored artifacts")
    rsub = p_report.add_subparsers(dest="subcommand", required=True)

    r_filter = rsub.add_parser("filter")
    r_filter.add_argument("--results", required=True)
    r_filter.add_argument("--out", required=True)
    r_filter.add_argument("--top-frac", default=None, help="fixed-fraction rule instead of mu+sigma")
    r_filter.set_defaults(func=_report_filter)

    r_quint = rsub.add_parser("quintiles")
    r_quint.add_argument("--results", required=True)
    r_quint.add_argument("--out", required=True)
    r_quint.set_defaults(func=_report_quintiles)

    r_skip = rsub.add_parser("skip-consistency")
    r_skip.add_argument("config")
    r_skip.add_argument("--intervals", default="0,2,4,8")
    r_skip.add_argument("--seeds", default="96")
    r_skip.add_argument("--s", default="10")
    r_skip.add_argument("--artifacts", default=None)
    r_skip.add_argument("--out", required=True)
    r_skip.set_defaults(func=_report_skip_consistency)

    r_res = rsub.add_parser("resample")
    r_res.add_argument("config")
    r_res.add_argument("--traj", required=True, help="trajectory record directory")
    r_res.add_argument("--t-star", default=None)
    r_res.add_argument("--n", default="8")
    r_res.add_argument("--seed", default="0")
    r_res.add_argument("--artifacts", default=None)
    r_res.add_argument("--out", required=True)
    r_res.set_defaults(func=_report_resample)

    r_adj = rsub.add_parser("adjacent")
    r_adj.add_argument("config")
    r_adj.add_argument("--eta", default="0.1")
    r_adj.add_argument("--n", default="8")
    r_adj.add_argument("--seeds", default="50")
    r_adj.add_argument("--seed", default="0")
    r_adj.add_argument("--artifacts", default=None)
    r_adj.add_argument("--out", required=True)
    r_adj.set_defaults(func=_report_adjacent)

    r_cont = rsub.add_parser("continuous-check")
    r_cont.add_argument("config")
    r_cont.add_argument("--interval", default="0,T", help="i,j with j possibly 'T'")
    r_cont.add_argument("--out", required=True)
    r_cont.set_defaults(func=_report_continuous)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerifyFailure as exc:
        print(f"verification FAILED: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
