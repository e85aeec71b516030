"""diffuq: pixel-wise uncertainty for diffusion samplers via a last-layer
Laplace posterior, propagated step by step through the reverse process and
validated against brute-force ensembles and closed-form recursions."""

from .schedule import NoiseSchedule, ScheduleError, drift_coeffs, half_log_snr, make_vp_schedule
from .score_model import (
    Dataset,
    ScoreNet,
    TrainingDivergence,
    init_scorenet,
    load_checkpoint,
    predict_noise,
    save_checkpoint,
    synth_dataset,
    train_map,
)
from .laplace import (
    LaplacePosterior,
    PosteriorModel,
    PredictiveMoments,
    ZeroUncertaintyModel,
    fit_lastlayer,
    load_posterior,
    predictive,
    predictive_exact,
    save_posterior,
)
from .samplers import ALL_KINDS, FIRST_ORDER_KINDS, SamplerKind, vanilla_sample
from .moments import (
    GenerationResult,
    MomentState,
    SkipSchedule,
    TrajectoryRecord,
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
from .oracle import AffineScoreModel, ExactAffineStats, affine_closed_form, ensemble_moments
from .continuous import QuadratureConfig, l2_rel_gap, var_continuous
from .analysis import (
    UncertaintyTable,
    adjacent_generations,
    default_resample_step,
    export_uncertainty_map,
    filter_threshold,
    image_uncertainty,
    knn_precision_recall,
    quintile_groups,
    resample_variants,
    skip_consistency_report,
)

__version__ = "0.1.0"
