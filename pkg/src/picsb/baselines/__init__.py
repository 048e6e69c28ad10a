from .pinns import PinnsConfig, pinns_fit, pinns_problem_for_sample
from .guidance import (
    GuidanceConfig,
    guidance_sample,
    karras_sigma_schedule,
    train_edm_prior,
)

__all__ = [
    "GuidanceConfig",
    "PinnsConfig",
    "guidance_sample",
    "karras_sigma_schedule",
    "pinns_fit",
    "pinns_problem_for_sample",
    "train_edm_prior",
]
