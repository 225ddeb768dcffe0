"""
Noise schedule, forward noising, the noise-prediction objective, denoiser
training and samplers.
"""

from utils.diffusion.schedule import NoiseSchedule, ScheduleConfig, build_schedule, schedule_from_config
from utils.diffusion.forward import DiffusionSample, ReconstructionError, draw_sample, q_sample
from utils.diffusion.training import (
    DenoiserTrainer,
    TrainingConfig,
    TrainingReport,
    denoise_loss,
    train_denoiser,
)
from utils.diffusion.sampling import ddim_sample, ddpm_sample

__all__ = [
    'NoiseSchedule',
    'ScheduleConfig',
    'build_schedule',
    'schedule_from_config',
    'DiffusionSample',
    'ReconstructionError',
    'draw_sample',
    'q_sample',
    'DenoiserTrainer',
    'TrainingConfig',
    'TrainingReport',
    'denoise_loss',
    'train_denoiser',
    'ddim_sample',
    'ddpm_sample',
]
