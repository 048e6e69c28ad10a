"""Viscous Burgers solver on the periodic unit interval.

    u_t + u u_x = nu u_xx,   x in (0,1) periodic,  t in [0,1]

Space: second-order central differences on x_i = i/nx, h = 1/nx.
Time: semi-implicit SBDF2 (implicit diffusion, explicit advection),
bootstrapped with one semi-implicit Euler step; both circulant linear
solves are done exactly in Fourier space.  Trajectories are simulated on
an internal fine grid (a multiple of the target resolution in space, an
independently chosen multiple in time) and then restricted by
subsampling, so target-grid nodes land on fine-grid nodes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fields import Field, NumericalError, RngStream

NU_HF = 0.01
NU_LF = 0.1


@dataclass(frozen=True)
class BurgersSpec:
    nx: int
    nt: int
    nu: float = NU_HF

    def __post_init__(self):
        if self.nx < 3 or self.nt < 3:
            raise ValueError(f"need nx, nt >= 3, got {self.nx}, {self.nt}")
        if self.nu <= 0:
            raise ValueError(f"viscosity must be > 0, got {self.nu}")

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def dt(self) -> float:
        return 1.0 / (self.nt - 1)


def sample_burgers_ic(rng: RngStream, nx: int) -> Field:
    """Zero-mean periodic random field, k^-2 spectral decay, unit std."""
    if nx < 3:
        raise ValueError(f"need nx >= 3, got {nx}")
    n_modes = nx // 2 + 1
    coeff = np.zeros(n_modes, dtype=np.complex128)
    k = np.arange(1, n_modes)
    re = rng.standard_normal(n_modes - 1)
    im = rng.standard_normal(n_modes - 1)
    coeff[1:] = (re + 1j * im) * k.astype(np.float64) ** -2.0
    u = np.fft.irfft(coeff, n=nx)
    u -= u.mean()
    std = u.std()
    if std == 0.0:
        raise NumericalError("degenerate zero draw for initial condition")
    return Field(u / std, ("space",))


def _advection(u: np.ndarray, h: float) -> np.ndarray:
    return u * (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * h)


def _diffusion_symbol(n: int, h: float) -> np.ndarray:
    # eigenvalues of the periodic central second-difference operator
    k = np.arange(n // 2 + 1)
    return (2.0 * np.cos(2.0 * np.pi * k / n) - 2.0) / h**2


def _run_fine(u0: np.ndarray, nu: float, dt: float, n_steps: int) -> np.ndarray:
    n = u0.size
    h = 1.0 / n
    lam = _diffusion_symbol(n, h)
    out = np.empty((n, n_steps + 1))
    out[:, 0] = u0

    with np.errstate(over="ignore", invalid="ignore"):
        u_prev = u0
        adv_prev = _advection(u_prev, h)
        # bootstrap: backward-Euler diffusion + explicit advection
        rhs = u_prev / dt - adv_prev
        u = np.fft.irfft(np.fft.rfft(rhs) / (1.0 / dt - nu * lam), n=n)
        if not np.all(np.isfinite(u)):
            raise NumericalError("Burgers solve went unstable at step 1")
        out[:, 1] = u

        denom = 1.5 / dt - nu * lam
        for step in range(2, n_steps + 1):
            adv = _advection(u, h)
            rhs = (4.0 * u - u_prev) / (2.0 * dt) - 2.0 * adv + adv_prev
            u_prev, adv_prev = u, adv
            u = np.fft.irfft(np.fft.rfft(rhs) / denom, n=n)
            if not np.all(np.isfinite(u)):
                raise NumericalError(f"Burgers solve went unstable at step {step}")
            out[:, step] = u
    return out


def simulate_burgers(u0: Field, spec: BurgersSpec, time_refine: int | None = None) -> Field:
    """Space-time trajectory on the (nx, nt) target grid; column 0 is u0
    restricted to the grid.

    Integration runs at the resolution of u0 in space and `time_refine`
    internal steps per output interval (defaulting to the spatial
    refinement factor), then subsamples both axes.
    """
    if u0.values.ndim != 1:
        raise ValueError("initial condition must be one-dimensional")
    n_fine = u0.values.shape[0]
    if n_fine < spec.nx or n_fine % spec.nx != 0:
        raise ValueError(
            f"initial condition length {n_fine} is not a multiple of nx={spec.nx}"
        )
    factor = n_fine // spec.nx
    if time_refine is None:
        time_refine = factor
    if time_refine < 1:
        raise ValueError(f"time refinement must be >= 1, got {time_refine}")
    dt_fine = spec.dt / time_refine
    n_steps = (spec.nt - 1) * time_refine
    fine = _run_fine(u0.values, spec.nu, dt_fine, n_steps)
    coarse = fine[::factor, ::time_refine]
    return Field(coarse, ("space", "time"))


def cfl_time_refine(u0: Field, spec: BurgersSpec, cfl: float = 0.45) -> int:
    """Internal steps per output interval keeping |u| dt <= cfl * h on the
    fine grid.  The viscous maximum principle bounds |u| by its initial
    value, so the initial condition is enough to size the step."""
    vmax = float(np.abs(u0.values).max())
    h_fine = 1.0 / u0.values.shape[0]
    needed = int(np.ceil(spec.dt * vmax / (cfl * h_fine))) if vmax > 0 else 1
    return max(u0.values.shape[0] // spec.nx, needed)


def make_lf_burgers(
    u0: Field, spec: BurgersSpec, nu_lf: float = NU_LF, time_refine: int | None = None
) -> Field:
    """Low-fidelity companion: same initial condition, larger viscosity."""
    return simulate_burgers(u0, BurgersSpec(spec.nx, spec.nt, nu_lf), time_refine)
