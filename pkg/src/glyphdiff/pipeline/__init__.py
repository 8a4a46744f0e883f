"""End-to-end orchestration: training, fine-tuning, generation, evaluation."""

from .core import (
    BACKBONE_FILE,
    BNR_FILE,
    CLASSIFIER_FILE,
    CODEC_FILE,
    DiffusionPipeline,
)
from .train import train_base
from .finetune import FREEZE_PLANS, finetune, trainable_parameter_names
from .generate import generate, save_comparison_grid
from .evaluate import (
    ABLATION_ARMS,
    ABLATION_PLANS,
    SETTING_POOLS,
    ablation_grid,
    check_ablation_ordering,
    evaluate_setting,
    grid_to_dict,
    refs_for_style,
    run_evaluation,
    setting_pools,
)
from .gradients import analyze_gradients, build_probe_batch, probe_loss, sensitivity_analysis

__all__ = [
    "BACKBONE_FILE",
    "BNR_FILE",
    "CLASSIFIER_FILE",
    "CODEC_FILE",
    "DiffusionPipeline",
    "train_base",
    "FREEZE_PLANS",
    "finetune",
    "trainable_parameter_names",
    "generate",
    "save_comparison_grid",
    "ABLATION_ARMS",
    "ABLATION_PLANS",
    "SETTING_POOLS",
    "ablation_grid",
    "check_ablation_ordering",
    "evaluate_setting",
    "grid_to_dict",
    "refs_for_style",
    "run_evaluation",
    "setting_pools",
    "analyze_gradients",
    "build_probe_batch",
    "probe_loss",
    "sensitivity_analysis",
]
