"""Steady Darcy flow on the unit square with zero Dirichlet boundary.

    -div( a(x) grad u(x) ) = f,   u = 0 on the boundary

Five-point stencil with harmonic-mean face coefficients on nodes
x_i = i/(n-1); the SPD interior system is solved with conjugate
gradients.  The permeability sampler thresholds a smooth Gaussian random
field at its median to produce a two-valued medium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..fields import Field, NumericalError, RngStream

A_LOW = 3.0
A_HIGH = 12.0


@dataclass(frozen=True)
class DarcySpec:
    n: int
    forcing: float = 1.0
    cg_rtol: float = 1e-10

    def __post_init__(self):
        if self.n < 5:
            raise ValueError(f"need n >= 5, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)


def sample_darcy_permeability(
    rng: RngStream, n: int, a_low: float = A_LOW, a_high: float = A_HIGH
) -> Field:
    """Two-valued permeability: smooth GRF thresholded at its median."""
    if n < 5:
        raise ValueError(f"need n >= 5, got {n}")
    noise = rng.standard_normal((n, n))
    kx = np.fft.fftfreq(n, d=1.0 / n)[:, None]
    ky = np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    k2 = kx**2 + ky**2
    k0 = max(2.0, n / 16.0)  # correlation scale tracks the grid
    smooth = np.fft.irfft2(np.fft.rfft2(noise) * np.exp(-k2 / k0**2), s=(n, n))
    med = np.median(smooth)
    return Field(np.where(smooth > med, a_high, a_low), ("row", "col"))


def harmonic_face_coefficients(a: np.ndarray):
    """Face coefficients (aE, aW, aN, aS) for the interior nodes.

    Axis 0 is "row" (south/north neighbours at i-1/i+1), axis 1 is "col"
    (west/east at j-1/j+1); the same convention is used by the residual
    operator.
    """
    hm = lambda p, q: 2.0 * p * q / (p + q)
    c = a[1:-1, 1:-1]
    return (
        hm(c, a[1:-1, 2:]),  # east
        hm(c, a[1:-1, :-2]),  # west
        hm(c, a[2:, 1:-1]),  # north
        hm(c, a[:-2, 1:-1]),  # south
    )


def darcy_apply(u: np.ndarray, a: np.ndarray, h: float) -> np.ndarray:
    """Interior stencil application -div(a grad u), shape (n-2, n-2)."""
    ae, aw, an, a_s = harmonic_face_coefficients(a)
    c = u[1:-1, 1:-1]
    flux = (
        ae * (c - u[1:-1, 2:])
        + aw * (c - u[1:-1, :-2])
        + an * (c - u[2:, 1:-1])
        + a_s * (c - u[:-2, 1:-1])
    )
    return flux / h**2


def solve_darcy(a: Field, spec: DarcySpec) -> Field:
    """Pressure field on the full n x n grid with zero boundary."""
    av = a.values
    if av.shape != (spec.n, spec.n):
        raise ValueError(f"permeability dims {av.shape} != ({spec.n}, {spec.n})")
    if np.any(av <= 0):
        raise ValueError("permeability must be strictly positive")
    n = spec.n
    m = n - 2
    h = spec.h
    ae, aw, an, a_s = harmonic_face_coefficients(av)

    diag = (ae + aw + an + a_s).ravel() / h**2
    east = (-ae / h**2).ravel()[:-1]
    west = (-aw / h**2).ravel()[1:]
    north = (-an / h**2).ravel()[:-m]
    south = (-a_s / h**2).ravel()[m:]
    # zero the couplings that would wrap across row ends
    east[m - 1 :: m] = 0.0
    west[m - 1 :: m] = 0.0
    mat = sp.diags(
        [diag, east, west, north, south], [0, 1, -1, m, -m], format="csr"
    )
    b = np.full(m * m, spec.forcing)

    u_int, info = spla.cg(mat, b, rtol=spec.cg_rtol, atol=0.0, maxiter=50 * m * m)
    if info != 0:
        raise NumericalError(f"Darcy CG did not converge (info={info})")
    u = np.zeros((n, n))
    u[1:-1, 1:-1] = u_int.reshape(m, m)
    return Field(u, ("row", "col"))
