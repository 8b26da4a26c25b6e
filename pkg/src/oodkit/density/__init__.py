from .mixture import MixtureParams, discretized_logistic_mixture_logpmf
from .model import (
    ModelConfig,
    ModelState,
    TrainingDivergenceError,
    ablate_long_range,
    init_state,
    load_checkpoint,
    log_likelihood,
    log_likelihood_batch,
    mutate_dataset,
    mutate_for_background,
    predictive_stats,
    save_checkpoint,
    train,
)

__all__ = [
    "MixtureParams",
    "discretized_logistic_mixture_logpmf",
    "ModelConfig",
    "ModelState",
    "TrainingDivergenceError",
    "ablate_long_range",
    "init_state",
    "load_checkpoint",
    "log_likelihood",
    "log_likelihood_batch",
    "mutate_dataset",
    "mutate_for_background",
    "predictive_stats",
    "save_checkpoint",
    "train",
]
