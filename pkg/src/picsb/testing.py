"""Built-in verification routines exposed through `picsb check`."""

from __future__ import annotations

import numpy as np
import torch

from .bridge import sample_theta_t
from .fields import RngStream
from .net import NetConfig, VelocityNet, flatten, grad, init_params, unflatten_
from .observation import sample_mask
from .residuals import burgers_residual_op


def burgers_toy_gradcheck(
    n_coords: int = 20,
    seed: int = 0,
    bridge_steps: int = 4,
    noise_scale: float = 1e-2,
    fd_step: float = 1e-6,
) -> float:
    """Worst central-finite-difference relative error of the reverse-mode
    gradient of  residual_rms(sampler output)^2  on a 16x16 toy.

    The noise inside the sampler is reconstructed from a fixed stream on
    every evaluation, so the probed loss is a deterministic function of
    the parameters.
    """
    rng = RngStream(seed)
    nx = nt = 16
    nu, h, dt = 0.01, 1.0 / nx, 1.0 / (nt - 1)
    x0 = rng.fork("x0").standard_normal((nx, nt))
    truth = rng.fork("truth").standard_normal((nx, nt))
    mask = sample_mask("R2", 0.1, (nx,), nt, rng.fork("mask")).T
    mask_t = torch.from_numpy(np.ascontiguousarray(mask))[None, None] == 1.0
    y_t = torch.from_numpy(mask * truth)[None, None]
    x0_t = torch.from_numpy(x0)[None, None]
    op = burgers_residual_op(nu, h, dt)

    # probe at a fully random parameter point: the identity-transport init
    # zeroes the output conv, which would make most gradients trivially zero
    net = init_params(
        NetConfig(in_channels=1, enc_channels=(4, 8), dec_channels=(8, 4)),
        rng.fork("net"),
    )
    unflatten_(net, 0.2 * rng.fork("params").standard_normal(flatten(net).size))

    def loss_fn(n: VelocityNet) -> torch.Tensor:
        out = sample_theta_t(
            x0_t, 0, mask_t, y_t, n, bridge_steps, noise_scale,
            RngStream(seed, 987654321).fork("chain"),
        )
        res, valid = op(out[0, 0])
        return torch.mean(res[valid] ** 2)

    analytic = grad(loss_fn, net)
    params = flatten(net)
    coords = rng.fork("probes").permutation(params.size)[:n_coords]
    worst = 0.0
    probe = VelocityNet(net.config)
    for c in coords:
        delta = fd_step * max(1.0, abs(params[c]))
        vals = []
        for sign in (1.0, -1.0):
            p = params.copy()
            p[c] += sign * delta
            unflatten_(probe, p)
            with torch.no_grad():
                pass  # loss_fn builds its own graph; value read below
            vals.append(float(loss_fn(probe).detach()))
        fd = (vals[0] - vals[1]) / (2.0 * delta)
        rel = abs(fd - analytic[c]) / max(abs(fd), abs(analytic[c]), 1e-8)
        worst = max(worst, rel)
    return worst
