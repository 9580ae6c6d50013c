"""Proactive multi-intent failure prediction with root-cause disambiguation.

A numpy library covering the full pipeline: synthetic KPI benchmark
generation, causal feature engineering, a logistic teacher, a teacher-guided
mixture-of-experts predictor with its own autodiff kernel, alerting with
threshold tuning and multi-horizon time-to-failure bounds, Shapley
attributions, baselines, and a blocked cross-validation harness.
"""
from .alerting import (AlertEvent, AlertPolicy, EwmaState, TtfBound, ewma_smooth,
                       extract_events, stream, ttf_bound, tune_thresholds)
from .baselines import (DistTargetModel, LrOvrModel, MlpModel, WkpiStaticModel,
                        train_dist_target, train_lr, train_mlp)
from .bundles import load_bundle, save_bundle
from .evalharness import (EvalReport, FoldMetrics, fold_plan, percent_of_best,
                          run_cv, score_events, write_report)
from .explain import Attribution, grouped_shapley, sampled_shapley, shapley_attribution
from .features import FeatureSpec, Standardizer, featurize
from .model import (LossConfig, MildArch, MildModel, MildNetwork, TrainConfig,
                    train_mild)
from .synthgen import (GenConfig, GeneratedBenchmark, KpiProfile, generate,
                       inject_co_drift, inject_hard_negative, inject_non_linear,
                       inject_simple_drift)
from .teacher import TeacherModel, train_teacher
from .types import (DEFAULT_INTENTS, KPI_NAMES, EpisodeAnnotation, EpisodeKind,
                    IntentId, KpiFrame, KpiSeries, LabelMatrices, RngStream,
                    gate_supervision, gate_targets, make_bin_labels,
                    make_cause_labels, rng_for)

__version__ = "0.1.0"
