"""Toolkit for aligning generative denoising with perception objectives.

Library layers, bottom up: scheduler algebra (``schedule``), contribution
estimation (``contribution``), timestep policies (``strategy``), target
corruption (``augmentation``), the synthetic referring-segmentation world
(``toytask``), a from-scratch denoiser (``denoiser``), guided sampling and
correction workflows (``guidance``, ``evaluation``), and experiment
orchestration (``harness``, ``server``).
"""

from .schedule import (NoiseSchedule, ScheduleError, corrected_epsilon, ddim_step,
                       forward_diffuse, make_schedule, predict_eps, predict_x0)
from .contribution import (ContributionProfile, MetricTrace, RegressionFit,
                           fit_linear_regression, schedule_profile, stats_profile,
                           uniform_profile)
from .strategy import TimestepStrategy, loss_weight, make_strategy, sample_timestep
from .augmentation import AugmentationSpec, augment, gaussian_blur
from .toytask import (Condition, Dataset, MaskExtractionConfig, TaskConfig, ToyScene,
                      depth_metrics, extract_mask, generate_dataset, generate_scene,
                      iou, oiou, render_depth, render_target)
from .denoiser import (DenoiserParams, ModelConfig, OptimizerState, TrainConfig,
                       forward, init_params, load_checkpoint, save_checkpoint, train,
                       train_step)
from .guidance import (GuidanceWeights, RuleBasedAdvisor, Trajectory, compose_guidance,
                       majority_vote, propose_negatives, run_correction_workflow,
                       sample_trajectory)
from .evaluation import EvalReport, collect_trace, evaluate_model, group_checkpoints
from .harness import ExperimentConfig, run_ablation, run_training

__all__ = [name for name in dir() if not name.startswith("_")]
