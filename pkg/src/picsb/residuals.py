"""Discretized PDE residual operators and residual-based diagnostics.

The stencils are written once in torch so the same code serves three
callers: residual reporting on numpy fields, the physics-residual
training loss (which differentiates through them), and gradient-guided
baselines.  Factories like `burgers_residual_op` return a closure
``x -> (residual, valid_mask)`` over torch tensors shaped like the field.

Residual norms are root-mean-square over valid stencil nodes, so one
loss scale works across grid sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .fields import Field
from .observation import ObservationSet, project

DTYPE = torch.float64


@dataclass(frozen=True)
class ResidualField:
    """Residual values on the field grid; defined only where valid_mask holds."""

    values: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.valid_mask.shape:
            raise ValueError("residual values and valid mask shapes differ")


def residual_norm(r: ResidualField) -> float:
    """RMS over valid nodes."""
    vals = r.values[r.valid_mask]
    if vals.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(vals * vals)))


def _rms_t(res: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(torch.mean(res[valid] ** 2))


# ---------------------------------------------------------------------------
# Burgers: backward time difference, central advection and diffusion,
# periodic in space.  x has layout (space, time).

def burgers_residual_t(x: torch.Tensor, nu: float, h: float, dt: float):
    if x.shape[0] < 3 or x.shape[1] < 2:
        raise ValueError(f"grid too small for the stencil: {tuple(x.shape)}")
    xp = torch.roll(x, -1, dims=0)
    xm = torch.roll(x, 1, dims=0)
    cur, prev = x[:, 1:], x[:, :-1]
    time = (cur - prev) / dt
    adv = cur * (xp[:, 1:] - xm[:, 1:]) / (2.0 * h)
    diff = nu * (xp[:, 1:] - 2.0 * cur + xm[:, 1:]) / h**2
    res = torch.zeros_like(x)
    res[:, 1:] = time + adv - diff
    valid = torch.zeros(x.shape, dtype=torch.bool)
    valid[:, 1:] = True
    return res, valid


def burgers_residual_op(nu: float, h: float, dt: float):
    return lambda x: burgers_residual_t(x, nu, h, dt)


def residual_burgers(x: Field, nu: float, h: float, dt: float) -> ResidualField:
    with torch.no_grad():
        res, valid = burgers_residual_t(
            torch.from_numpy(np.array(x.values)), nu, h, dt
        )
    return ResidualField(res.numpy(), valid.numpy())


# ---------------------------------------------------------------------------
# Darcy: harmonic-mean five-point stencil minus the forcing, interior only.

def darcy_residual_t(u: torch.Tensor, a: torch.Tensor, f: float, h: float):
    if u.shape != a.shape:
        raise ValueError(f"field dims {tuple(u.shape)} != permeability {tuple(a.shape)}")
    if torch.any(a <= 0):
        raise ValueError("permeability must be strictly positive")
    hm = lambda p, q: 2.0 * p * q / (p + q)
    c_a = a[1:-1, 1:-1]
    ae = hm(c_a, a[1:-1, 2:])
    aw = hm(c_a, a[1:-1, :-2])
    an = hm(c_a, a[2:, 1:-1])
    a_s = hm(c_a, a[:-2, 1:-1])
    c = u[1:-1, 1:-1]
    flux = (
        ae * (c - u[1:-1, 2:])
        + aw * (c - u[1:-1, :-2])
        + an * (c - u[2:, 1:-1])
        + a_s * (c - u[:-2, 1:-1])
    ) / h**2
    res = torch.zeros_like(u)
    res[1:-1, 1:-1] = flux - f
    valid = torch.zeros(u.shape, dtype=torch.bool)
    valid[1:-1, 1:-1] = True
    return res, valid


def darcy_residual_op(a: Field, f: float, h: float):
    a_t = torch.from_numpy(np.array(a.values))
    return lambda x: darcy_residual_t(x, a_t, f, h)


def residual_darcy(u: Field, a: Field, f: float, h: float) -> ResidualField:
    with torch.no_grad():
        res, valid = darcy_residual_t(
            torch.from_numpy(np.array(u.values)),
            torch.from_numpy(np.array(a.values)),
            f,
            h,
        )
    return ResidualField(res.numpy(), valid.numpy())


# ---------------------------------------------------------------------------
# Kolmogorov: spectral stream function / velocity, backward difference
# between saved frames.  Fields live on (0, 2*pi)^2 with axes (x1, x2).

def _wavenumbers(n: int):
    k1 = torch.fft.fftfreq(n, d=1.0 / n, dtype=DTYPE).reshape(n, 1)
    k2 = torch.fft.rfftfreq(n, d=1.0 / n, dtype=DTYPE).reshape(1, n // 2 + 1)
    return k1, k2


def _stream_hat(w_hat: torch.Tensor, n: int) -> torch.Tensor:
    k1, k2 = _wavenumbers(n)
    k_sq = k1**2 + k2**2
    inv = torch.zeros_like(k_sq)
    inv[k_sq > 0] = 1.0 / k_sq[k_sq > 0]
    return -w_hat * inv  # lap psi = w, zero mode gauged to 0


def stream_function(w: Field) -> Field:
    """Spectral inverse Laplacian with the zero mode set to 0."""
    if abs(float(w.values.mean())) > 1e-8:
        raise ValueError("non-zero-mean vorticity")
    n = w.values.shape[-1]
    if w.values.ndim != 2 or w.values.shape != (n, n):
        raise ValueError("expected a square 2D vorticity field")
    w_hat = torch.fft.rfft2(torch.from_numpy(np.array(w.values)))
    psi = torch.fft.irfft2(_stream_hat(w_hat, n), s=(n, n))
    return Field(psi.numpy(), w.axis_tags)


def velocity_hat_t(w_hat: torch.Tensor, n: int):
    k1, k2 = _wavenumbers(n)
    psi_hat = _stream_hat(w_hat, n)
    return 1j * k2 * psi_hat, -1j * k1 * psi_hat


def velocity_from_vorticity(w: Field) -> tuple[Field, Field]:
    """v = (d psi / d x2, -d psi / d x1); divergence-free by construction."""
    if abs(float(w.values.mean())) > 1e-8:
        raise ValueError("non-zero-mean vorticity")
    n = w.values.shape[-1]
    w_hat = torch.fft.rfft2(torch.from_numpy(np.array(w.values)))
    v1_hat, v2_hat = velocity_hat_t(w_hat, n)
    v1 = torch.fft.irfft2(v1_hat, s=(n, n)).numpy()
    v2 = torch.fft.irfft2(v2_hat, s=(n, n)).numpy()
    return Field(v1, w.axis_tags), Field(v2, w.axis_tags)


def kolmogorov_forcing(n: int) -> np.ndarray:
    x2 = 2.0 * np.pi * np.arange(n) / n
    return np.broadcast_to(-4.0 * np.cos(4.0 * x2)[None, :], (n, n)).copy()


def kolmogorov_residual_t(
    w: torch.Tensor, re: float, dgamma: float, forcing_on: bool = True
):
    """Raw stencil: accepts arbitrary candidate fields (the zero mode of the
    stream function is gauged away), so training states and projected
    iterates can be scored.  The Field wrapper enforces the zero-mean gauge."""
    if w.ndim != 3 or w.shape[0] < 2:
        raise ValueError("need at least two frames of vorticity")
    n = w.shape[-1]
    k1, k2 = _wavenumbers(n)
    cur = w[1:]
    w_hat = torch.fft.rfft2(cur)
    v1_hat, v2_hat = velocity_hat_t(w_hat, n)
    v1 = torch.fft.irfft2(v1_hat, s=(n, n))
    v2 = torch.fft.irfft2(v2_hat, s=(n, n))
    wx1 = torch.fft.irfft2(1j * k1 * w_hat, s=(n, n))
    wx2 = torch.fft.irfft2(1j * k2 * w_hat, s=(n, n))
    lap = torch.fft.irfft2(-(k1**2 + k2**2) * w_hat, s=(n, n))
    res_frames = (cur - w[:-1]) / dgamma + v1 * wx1 + v2 * wx2 - lap / re
    if forcing_on:
        f = torch.from_numpy(kolmogorov_forcing(n)).to(w.dtype)
        res_frames = res_frames - (f - 0.1 * cur)
    res = torch.zeros_like(w)
    res[1:] = res_frames
    valid = torch.zeros(w.shape, dtype=torch.bool)
    valid[1:] = True
    return res, valid


def kolmogorov_residual_op(re: float, dgamma: float, forcing_on: bool = True):
    return lambda x: kolmogorov_residual_t(x, re, dgamma, forcing_on)


def residual_kolmogorov(
    w: Field, re: float, dgamma: float, forcing_on: bool = True
) -> ResidualField:
    if np.abs(w.values.mean(axis=(1, 2))).max() > 1e-8:
        raise ValueError("non-zero-mean vorticity frame")
    with torch.no_grad():
        res, valid = kolmogorov_residual_t(
            torch.from_numpy(np.array(w.values)), re, dgamma, forcing_on
        )
    return ResidualField(res.numpy(), valid.numpy())


# ---------------------------------------------------------------------------
# Residual floor: projected gradient descent of the squared residual RMS,
# with the hard projection re-applied after every step.

@dataclass(frozen=True)
class ResidualFloorEstimate:
    value: float
    iterations: int
    converged: bool
    best: Field


def estimate_residual_floor(
    obs: ObservationSet,
    residual_op,
    init: Field,
    iters: int = 500,
    step: float = 1e-3,
) -> ResidualFloorEstimate:
    """Diagnostic estimate of inf ||R_h(x)|| over observation-consistent x.

    Every iterate satisfies H(x) = y exactly; the reported value is the
    best RMS seen, so it is nonincreasing in the iteration budget.  When
    all points are observed the feasible set is a singleton and no
    iterations run.  A 10x growth of the RMS from its start sets
    converged=False.
    """
    if iters < 1:
        raise ValueError("need iters >= 1")
    start = project(init, obs)

    def rms_of(x_t: torch.Tensor) -> torch.Tensor:
        res, valid = residual_op(x_t)
        return _rms_t(res, valid)

    mask_t = torch.from_numpy(np.array(obs.mask.values)) == 1.0
    y_t = torch.from_numpy(np.array(obs.values.values))
    x = torch.from_numpy(np.array(start.values))
    if bool(mask_t.all()):
        value = float(rms_of(x))
        return ResidualFloorEstimate(value, 0, True, start)

    best_val = float(rms_of(x))
    start_val = best_val
    best_x = x.clone()
    converged = True
    done = 0
    for it in range(iters):
        xg = x.clone().requires_grad_(True)
        loss = rms_of(xg) ** 2
        (grad,) = torch.autograd.grad(loss, xg)
        x = torch.where(mask_t, y_t, x - step * grad)
        done = it + 1
        val = float(rms_of(x))
        if not math.isfinite(val) or val > 10.0 * start_val:
            converged = False
            break
        if val < best_val:
            best_val = val
            best_x = x.clone()
    return ResidualFloorEstimate(
        best_val, done, converged, Field(best_x.numpy(), init.axis_tags)
    )


def burgers_error_bound(
    x_ref: Field,
    delta: float,
    nu: float,
    h: float,
    dt: float,
    length: float = 1.0,
) -> float:
    """State-error bound from the residual difference norm for the Burgers
    stencil: delta / (1/dt + nu (pi/L)^2 + min gradient term over valid nodes)."""
    x = x_ref.values
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("reference must be a (space, time) field with >= 2 columns")
    grad = (np.roll(x, -1, axis=0) - np.roll(x, 1, axis=0)) / (2.0 * h)
    min_term = float(grad[:, 1:].min())
    denom = 1.0 / dt + nu * (np.pi / length) ** 2 + min_term
    if denom <= 0:
        raise ValueError("bound inapplicable: nonpositive denominator")
    return float(delta) / denom
