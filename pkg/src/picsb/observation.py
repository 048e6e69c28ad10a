"""Observation operator, sensor masks for regimes R1-R3, and hard projection.

The observation operator selects grid coordinates: an ObservationSet holds a
binary mask M (1 = observed) plus the observed values scattered back onto the
full grid (zero elsewhere).  The hard projection overwrites observed
coordinates,

    project(x) = M * y + (1 - M) * x,

so any projected state satisfies H(x) = y bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, RngStream


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Binary mask plus observed values on the full grid."""

    mask: Field
    values: Field

    def __post_init__(self):
        m = self.mask.values
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("mask must be binary")
        if self.mask.dims != self.values.dims:
            raise ValueError(
                f"mask dims {self.mask.dims} != values dims {self.values.dims}"
            )
        if np.any(self.values.values[m == 0.0] != 0.0):
            raise ValueError("values must be zero at unobserved coordinates")

    @property
    def n_observed(self) -> int:
        return int(self.mask.values.sum())

    @property
    def is_empty(self) -> bool:
        return self.n_observed == 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return self.mask == other.mask and self.values == other.values


def sample_mask(
    regime: str,
    ratio: float,
    spatial_dims: tuple[int, ...],
    frames: int,
    rng: RngStream,
) -> np.ndarray:
    """Sensor mask of shape (frames, *spatial_dims) with exactly
    round(ratio * n_spatial) observed points per frame.

    R1 draws an independent spatial set per frame; R2 draws one set and
    replicates it across frames.  R3 uses the same rule as R2 -- sharing
    across samples comes from handing every sample the same dataset-level
    stream (see pde.dataset.mask_stream).
    """
    if not (0.0 < ratio <= 1.0):
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if frames < 1:
        raise ValueError(f"frames must be >= 1, got {frames}")
    if regime not in ("R1", "R2", "R3"):
        raise ValueError(f"unknown regime {regime!r}")
    n_spatial = int(np.prod(spatial_dims))
    k = int(round(ratio * n_spatial))
    mask = np.zeros((frames, n_spatial), dtype=np.float64)
    if regime == "R1":
        for j in range(frames):
            mask[j, rng.permutation(n_spatial)[:k]] = 1.0
    else:
        idx = rng.permutation(n_spatial)[:k]
        mask[:, idx] = 1.0
    return mask.reshape((frames, *spatial_dims))


def observe(x: Field, mask: Field) -> ObservationSet:
    """Apply the selection operator: values = mask * x."""
    if x.dims != mask.dims:
        raise ValueError(f"field dims {x.dims} != mask dims {mask.dims}")
    values = mask.values * x.values
    return ObservationSet(mask=mask, values=Field(values, x.axis_tags))


def project(x: Field, obs: ObservationSet) -> Field:
    """Hard projection onto the observation-consistent set."""
    if x.dims != obs.mask.dims:
        raise ValueError(f"field dims {x.dims} != observation dims {obs.mask.dims}")
    m = obs.mask.values
    out = np.where(m == 1.0, obs.values.values, x.values)
    return Field(out, x.axis_tags)


def observation_misfit(x: Field, obs: ObservationSet) -> float:
    """RMS of x - y over observed coordinates (0 when none observed)."""
    m = obs.mask.values == 1.0
    if not m.any():
        return 0.0
    d = x.values[m] - obs.values.values[m]
    return float(np.sqrt(np.mean(d * d)))


def perturb_observations(
    obs: ObservationSet, alpha: float, data_std: float, rng: RngStream
) -> ObservationSet:
    """Gaussian corruption of observed values with sigma = alpha * data_std.

    Mask is unchanged and unobserved entries stay zero.  The noise field is
    drawn on the full grid so the realization depends only on rng, not on
    the mask pattern.
    """
    if alpha < 0:
        raise ValueError(f"noise level must be >= 0, got {alpha}")
    if alpha == 0.0:
        return obs
    sigma = alpha * float(data_std)
    noise = rng.standard_normal(obs.mask.dims) * sigma
    values = obs.values.values + obs.mask.values * noise
    return ObservationSet(mask=obs.mask, values=Field(values, obs.values.axis_tags))
