"""Decision layer: image scores, filtering, grouping, and study protocols.

Pixel-wise variance maps are aggregated by summation into an image-wise
uncertainty score. The filtering rule keeps generations at or below
mu + sigma of the empirical score distribution (roughly the top 16% are
dropped when the distribution is close to normal); quintile grouping orders
generations by descending score into five equal groups for metric trends.

Sample quality is measured in raw pixel space with k-nearest-neighbor
precision/recall: a generated point is precise when it falls inside the
union of k-NN balls of the real set, and recall swaps the roles.

Two study protocols follow the uncertainty-as-signal experiments: resampling
variants from the propagated Gaussian at an intermediate step, and denoising
perturbed initial seeds x_adj = sqrt(1-eta) x_T + sqrt(eta) z to relate
uncertainty with generation diversity. Both denoise deterministically, with
no further uncertainty injection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import skew, spearmanr

from .arrayio import save_arrays
from .moments import (
    GenerationResult,
    SkipSchedule,
    TrajectoryRecord,
    nfe_formula,
    run_bayesdiff,
    run_bayesdiff_skip,
)
from .samplers import SamplerKind, vanilla_sample
from .schedule import NoiseSchedule
from .seeding import child_rng

__all__ = [
    "UncertaintyTable",
    "FilterResult",
    "image_uncertainty",
    "filter_threshold",
    "quintile_groups",
    "knn_precision_recall",
    "default_resample_step",
    "resample_variants",
    "adjacent_generations",
    "SkipConsistencyReport",
    "skip_consistency_report",
    "export_uncertainty_map",
    "histogram_csv",
]


def image_uncertainty(var0: np.ndarray) -> float:
    """Sum of the pixel-wise variances (permutation invariant)."""
    var0 = np.asarray(var0, dtype=np.float64)
    if np.any(var0 < 0.0):
        raise ValueError("var0 must be nonnegative")
    return float(var0.sum())


@dataclass
class UncertaintyTable:
    """Rows of (run_id, seed, image_uncertainty, kind, skip_desc)."""

    run_id: np.ndarray
    seed: np.ndarray
    score: np.ndarray
    kind: list[str]
    skip_desc: list[str]

    def __len__(self) -> int:
        return int(self.score.size)

    @classmethod
    def from_results(cls, results: list[GenerationResult], start_run_id: int = 0) -> "UncertaintyTable":
        return cls(
            run_id=np.arange(start_run_id, start_run_id + len(results)),
            seed=np.array([r.seed for r in results], dtype=np.int64),
            score=np.array([r.image_uncertainty for r in results]),
            kind=[r.kind_name for r in results],
            skip_desc=[r.skip_desc for r in results],
        )

    @classmethod
    def from_csv(cls, path: str | Path) -> "UncertaintyTable":
        run_id, seed, score, kind, skip_desc = [], [], [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                run_id.append(int(row["run_id"]))
                seed.append(int(row["seed"]))
                score.append(float(row["image_uncertainty"]))
                kind.append(row["kind"])
                skip_desc.append(row["skip_desc"])
        return cls(
            run_id=np.asarray(run_id),
            seed=np.asarray(seed, dtype=np.int64),
            score=np.asarray(score),
            kind=kind,
            skip_desc=skip_desc,
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run_id", "seed", "kind", "S", "skip_desc", "image_uncertainty", "nfe_count"])
            for i in range(len(self)):
                writer.writerow(
                    [self.run_id[i], self.seed[i], self.kind[i], "", self.skip_desc[i], repr(float(self.score[i])), ""]
                )

    def summary(self) -> tuple[float, float, float]:
        """(mean, sample std, skewness) of the image scores."""
        if len(self) == 0:
            raise ValueError("empty table")
        mu = float(self.score.mean())
        sd = float(self.score.std(ddof=1)) if len(self) > 1 else 0.0
        sk = float(skew(self.score)) if (len(self) > 2 and sd > 0.0) else 0.0
        return mu, sd, sk


@dataclass
class FilterResult:
    threshold: float
    kept_idx: np.ndarray
    removed_idx: np.ndarray

    @property
    def kept_fraction(self) -> float:
        total = self.kept_idx.size + self.removed_idx.size
        return self.kept_idx.size / total


def filter_threshold(table: UncertaintyTable) -> FilterResult:
    """Keep rows with score <= mu + sigma (ties at the boundary are kept)."""
    if len(table) < 10:
        raise ValueError("filtering needs at least 10 rows")
    mu, sd, _ = table.summary()
    threshold = mu + sd
    kept = np.nonzero(table.score <= threshold)[0]
    removed = np.nonzero(table.score > threshold)[0]
    return FilterResult(threshold=float(threshold), kept_idx=kept, removed_idx=removed)


def quintile_groups(table: UncertaintyTable) -> list[np.ndarray]:
    """Five equal groups of row indices with descending uncertainty.

    Ties across a boundary break by ascending run_id; remainder rows go to
    the last (lowest-uncertainty) group.
    """
    order = np.lexsort((table.run_id, -table.score))
    base = len(table) // 5
    if base == 0:
        raise ValueError("need at least 5 rows")
    groups = [order[k * base : (k + 1) * base] for k in range(5)]
    groups[4] = np.concatenate([groups[4], order[5 * base :]])
    return groups


def _knn_radii(points: np.ndarray, k: int) -> np.ndarray:
    d = cdist(points, points)
    return np.sort(d, axis=1)[:, k]  # column 0 is the self distance 0


def knn_precision_recall(
    real: np.ndarray, gen: np.ndarray, k: int = 3
) -> tuple[float, float]:
    """Raw-pixel-space manifold precision / recall.

    real and gen are arrays of pixel fields (n, c, h, w) or (n, d). Precision
    is the fraction of generated points inside the union of k-NN balls of the
    real points; recall swaps the two sets.
    """
    real = np.asarray(real, dtype=np.float64).reshape(len(real), -1)
    gen = np.asarray(gen, dtype=np.float64).reshape(len(gen), -1)
    if len(real) == 0 or len(gen) == 0:
        raise ValueError("both sets must be nonempty")
    if not 1 <= k < min(len(real), len(gen)):
        raise ValueError("k must satisfy 1 <= k < min(len(real), len(gen))")
    d_rg = cdist(real, gen)
    precision = float((d_rg <= _knn_radii(real, k)[:, None]).any(axis=0).mean())
    recall = float((d_rg <= _knn_radii(gen, k)[None, :]).any(axis=1).mean())
    return precision, recall


# ---------------------------------------------------------------------------
# resampling and adjacency studies
# ---------------------------------------------------------------------------


def default_resample_step(num_steps: int) -> int:
    """t* = round(0.8 T): late enough to matter, early enough to vary."""
    return int(round(0.8 * num_steps))


def resample_variants(
    traj: TrajectoryRecord,
    t_star: int,
    n: int,
    model,
    s: NoiseSchedule,
    kind: SamplerKind,
    seed: int = 0,
) -> np.ndarray:
    """Draw n states from N(E(x_t*), Var(x_t*)) and denoise each deterministically."""
    if not 1 <= t_star <= traj.num_steps:
        raise ValueError(f"t_star {t_star} outside the trajectory range 1..{traj.num_steps}")
    mean = traj.mean[t_star]
    var = traj.var[t_star]
    if np.any(var < 0.0):
        raise ValueError("recorded variance must be nonnegative")
    rng = child_rng(seed, "resample", t_star)
    out = np.empty((n, *mean.shape))
    std = np.sqrt(var)
    for i in range(n):
        start = mean + std * rng.standard_normal(mean.shape)
        out[i] = vanilla_sample(model, s, kind, start, t_start=t_star)
    return out


def adjacent_generations(
    x_T: np.ndarray,
    eta: float,
    n: int,
    model,
    s: NoiseSchedule,
    kind: SamplerKind,
    seed: int = 0,
) -> np.ndarray:
    """Denoise n perturbed seeds sqrt(1-eta) x_T + sqrt(eta) z deterministically."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    x_T = np.asarray(x_T, dtype=np.float64)
    rng = child_rng(seed, "adjacent")
    out = np.empty((n, *x_T.shape))
    for i in range(n):
        z = rng.standard_normal(x_T.shape)
        start = math.sqrt(1.0 - eta) * x_T + math.sqrt(eta) * z
        out[i] = vanilla_sample(model, s, kind, start)
    return out


# ---------------------------------------------------------------------------
# skip-consistency study
# ---------------------------------------------------------------------------


@dataclass
class SkipConsistencyReport:
    intervals: list[int]
    spearman: list[float]
    top_overlap: list[int]
    bottom_overlap: list[int]
    nfe: list[int]
    scores: np.ndarray  # (n_intervals, n_seeds)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["interval", "spearman", "top9_overlap", "bottom9_overlap", "nfe_count"])
            for i, k in enumerate(self.intervals):
                writer.writerow(
                    [k, repr(self.spearman[i]), self.top_overlap[i], self.bottom_overlap[i], self.nfe[i]]
                )


def skip_consistency_report(
    model,
    s: NoiseSchedule,
    kind: SamplerKind,
    seeds: list[int],
    intervals: list[int],
    S: int = 10,
    shape: tuple[int, int, int] = (1, 4, 4),
    marked: int = 9,
) -> SkipConsistencyReport:
    """Rank agreement between the full algorithm and skipped variants.

    The same initial noises are denoised at interval 0 (full) and at each
    interval > 0; per interval we report the Spearman correlation of the
    image scores against the full run plus the overlap of the top/bottom
    `marked` sets.
    """
    if len(seeds) < 32:
        raise ValueError("need at least 32 seeds for a stable ranking")
    if 0 not in intervals:
        raise ValueError("intervals must include 0 (the full algorithm)")
    x_Ts = [child_rng(seed, "x_T").standard_normal(shape) for seed in seeds]

    all_scores = np.zeros((len(intervals), len(seeds)))
    nfe = []
    for row, interval in enumerate(intervals):
        skip = None if interval == 0 else SkipSchedule.every(s.num_steps, interval)
        for col, (seed, x_T) in enumerate(zip(seeds, x_Ts)):
            if skip is None:
                res, _ = run_bayesdiff(x_T, kind, model, s, S=S, seed=seed)
            else:
                res, _ = run_bayesdiff_skip(x_T, kind, skip, model, s, S=S, seed=seed)
            all_scores[row, col] = res.image_uncertainty
        nfe.append(nfe_formula(kind.name, s.num_steps, S, skip))

    ref = all_scores[intervals.index(0)]
    ref_top = set(np.argsort(ref)[-marked:])
    ref_bottom = set(np.argsort(ref)[:marked])
    rho, top_ov, bot_ov = [], [], []
    for row in range(len(intervals)):
        sc = all_scores[row]
        rho.append(float(spearmanr(ref, sc).statistic))
        top_ov.append(len(ref_top & set(np.argsort(sc)[-marked:])))
        bot_ov.append(len(ref_bottom & set(np.argsort(sc)[:marked])))
    return SkipConsistencyReport(
        intervals=list(intervals),
        spearman=rho,
        top_overlap=top_ov,
        bottom_overlap=bot_ov,
        nfe=nfe,
        scores=all_scores,
    )


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def export_uncertainty_map(path_base: str | Path, var0: np.ndarray) -> tuple[Path, Path]:
    """Write a 16-bit min-max normalized PGM plus the raw float64 sidecar."""
    path_base = Path(path_base)
    var0 = np.asarray(var0, dtype=np.float64)
    plane = var0.mean(axis=0) if var0.ndim == 3 else var0
    lo, hi = float(plane.min()), float(plane.max())
    scale = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
    pixels = np.round(scale * 65535.0).astype(">u2")
    pgm_path = path_base.with_suffix(".pgm")
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{plane.shape[1]} {plane.shape[0]}\n65535\n".encode())
        fh.write(pixels.tobytes())
    raw_path = path_base.with_suffix(".f64")
    save_arrays(raw_path, {"var0": var0})
    return pgm_path, raw_path


def histogram_csv(path: str | Path, scores: np.ndarray, bins: int = 32) -> None:
    counts, edges = np.histogram(np.asarray(scores, dtype=np.float64), bins=bins)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for k in range(counts.size):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(counts[k])])
