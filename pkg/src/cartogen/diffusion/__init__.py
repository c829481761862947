from .schedule import NoiseSchedule, make_schedule, forward_noise
from .model import (
    ControlledDenoiser,
    ModelConfig,
    PARAM_GROUPS,
    control_to_tensor,
    predict_noise,
)
from .training import TrainingConfig, batch_loss, diffusion_loss, train_step, TrainingSession, emit_training_log
from .sampling import sample, sample_seeds
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "forward_noise",
    "ControlledDenoiser",
    "ModelConfig",
    "PARAM_GROUPS",
    "control_to_tensor",
    "predict_noise",
    "TrainingConfig",
    "batch_loss",
    "diffusion_loss",
    "train_step",
    "TrainingSession",
    "emit_training_log",
    "sample",
    "sample_seeds",
    "save_checkpoint",
    "load_checkpoint",
]
