"""Reconstruction of high-fidelity PDE fields from a full-grid low-fidelity
prior and sparse observations, via a hard-conditioned bridge sampler trained
on physics residuals only."""

from .fields import (
    ExperimentConfig,
    Field,
    NumericalError,
    RngStream,
    default_config,
    field_read,
    field_write,
    rng_fork,
)
from .observation import (
    ObservationSet,
    observation_misfit,
    observe,
    perturb_observations,
    project,
    sample_mask,
)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "Field",
    "NumericalError",
    "ObservationSet",
    "RngStream",
    "default_config",
    "field_read",
    "field_write",
    "observation_misfit",
    "observe",
    "perturb_observations",
    "project",
    "rng_fork",
    "sample_mask",
    "__version__",
]
