"""Few-step distillation of diffusion models on low-dimensional synthetic data."""

from ._slad import (
    ConfigError,
    Dataset,
    NoiseSchedule,
    ablate,
    distill,
    dl_interpolate,
    dl_schedule,
    energy_distance,
    evaluate,
    load_config,
    sample,
    sigma_error_surface,
    sigma_gamma_empirical,
    sigma_gamma_exact,
    sl_interpolate,
    train_teacher,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "NoiseSchedule",
    "ablate",
    "distill",
    "dl_interpolate",
    "dl_schedule",
    "energy_distance",
    "evaluate",
    "load_config",
    "sample",
    "sigma_error_surface",
    "sigma_gamma_empirical",
    "sigma_gamma_exact",
    "sl_interpolate",
    "train_teacher",
]
