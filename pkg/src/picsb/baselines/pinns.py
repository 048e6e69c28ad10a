"""Per-instance PINN baseline: a coordinate MLP fit to sparse observations
plus the governing PDE residual at randomly resampled collocation points.

The Burgers and Darcy networks output the solution value directly.  For
Kolmogorov the network outputs a stream potential whose Laplacian is the
vorticity, so the advecting velocity stays local in network derivatives;
spatial inputs enter through sin/cos features to respect the torus.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ..fields import Field, RngStream
from ..observation import ObservationSet

DTYPE = torch.float64


@dataclass
class PinnsConfig:
    hidden: int = 512
    depth: int = 6
    n_colloc: int = 8192
    lam_obs: float = 1.0
    lam_phys: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 5000  # desk default; the full-scale profile runs 100k
    lam_bc: float = 1.0
    n_bc: int = 2048
    clip_norm: float | None = None

    def __post_init__(self):
        if min(self.hidden, self.depth, self.n_colloc, self.epochs) <= 0:
            raise ValueError("counts must be positive")
        if min(self.lam_obs, self.lam_phys, self.lam_bc) < 0:
            raise ValueError("loss weights must be nonnegative")


def pinns_full_config(benchmark: str) -> PinnsConfig:
    if benchmark == "kolmogorov":
        return PinnsConfig(hidden=256, depth=4, epochs=100_000)
    cfg = PinnsConfig(epochs=100_000)
    if benchmark == "darcy":
        cfg.clip_norm = 1e-5
    return cfg


class CoordinateNet(nn.Module):
    """Stacked fully connected layers with tanh activations."""

    def __init__(self, in_dim: int, hidden: int, depth: int):
        super().__init__()
        dims = [in_dim] + [hidden] * depth + [1]
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1], dtype=DTYPE) for i in range(len(dims) - 1)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers[:-1]:
            x = torch.tanh(layer(x))
        return self.layers[-1](x)


def init_coordinate_net(in_dim: int, cfg: PinnsConfig, rng: RngStream) -> CoordinateNet:
    net = CoordinateNet(in_dim, cfg.hidden, cfg.depth)
    with torch.no_grad():
        for layer in net.layers:
            a = math.sqrt(6.0 / (layer.in_features + layer.out_features))
            layer.weight.copy_(
                torch.from_numpy(rng.uniform(-a, a, tuple(layer.weight.shape)))
            )
            layer.bias.zero_()
    return net


@dataclass
class PinnsProblem:
    """Everything the PINN loss needs to know about one sample."""

    benchmark: str
    meta: dict
    perm: Field | None = None


def pinns_problem_for_sample(benchmark: str, sample: dict) -> PinnsProblem:
    return PinnsProblem(benchmark, sample["meta"], sample.get("perm"))


def _grad(out: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    return torch.autograd.grad(out.sum(), x, create_graph=True)[0]


def _obs_coords(obs: ObservationSet, problem: PinnsProblem):
    """Grid coordinates and values of the observed nodes."""
    m = obs.mask.values == 1.0
    idx = np.argwhere(m)
    y = obs.values.values[m]
    meta = problem.meta
    if problem.benchmark == "burgers":
        coords = np.stack([idx[:, 0] * meta["h"], idx[:, 1] * meta["dt"]], axis=1)
    elif problem.benchmark == "darcy":
        coords = idx * meta["h"]
    else:  # kolmogorov: (frame, row, col) -> (x1, x2, gamma)
        dg = meta["dgamma"]
        coords = np.stack(
            [idx[:, 1] * meta["h"], idx[:, 2] * meta["h"], (idx[:, 0] + 1) * dg],
            axis=1,
        )
    return (
        torch.from_numpy(coords.astype(np.float64)),
        torch.from_numpy(y.astype(np.float64)).reshape(-1, 1),
    )


class _Model:
    """Benchmark-specific evaluation u(points) and residual(points)."""

    def __init__(self, net: CoordinateNet, problem: PinnsProblem):
        self.net = net
        self.problem = problem
        if problem.benchmark == "darcy":
            self._a_grid = problem.perm.values
            self._h = problem.meta["h"]
            self._ga1, self._ga2 = np.gradient(self._a_grid, self._h, edge_order=1)

    def _features(self, pts: torch.Tensor) -> torch.Tensor:
        if self.problem.benchmark != "kolmogorov":
            return pts
        x1, x2, g = pts[:, 0:1], pts[:, 1:2], pts[:, 2:3]
        return torch.cat(
            [torch.sin(x1), torch.cos(x1), torch.sin(x2), torch.cos(x2), g], dim=1
        )

    def value(self, pts: torch.Tensor) -> torch.Tensor:
        """Solution value: the network output, or lap(psi) for Kolmogorov."""
        if self.problem.benchmark != "kolmogorov":
            return self.net(self._features(pts))
        psi = self.net(self._features(pts))
        g = _grad(psi, pts)
        p11 = _grad(g[:, 0:1], pts)[:, 0:1]
        p22 = _grad(g[:, 1:2], pts)[:, 1:2]
        return p11 + p22

    def _interp_a(self, pts: np.ndarray):
        # bilinear lookup of a and its grid gradient at unit-square points
        n = self._a_grid.shape[0]
        q = np.clip(pts / self._h, 0, n - 1 - 1e-12)
        i0 = np.floor(q).astype(int)
        f = q - i0
        i1 = np.minimum(i0 + 1, n - 1)

        def bil(grid):
            g00 = grid[i0[:, 0], i0[:, 1]]
            g01 = grid[i0[:, 0], i1[:, 1]]
            g10 = grid[i1[:, 0], i0[:, 1]]
            g11 = grid[i1[:, 0], i1[:, 1]]
            return (
                g00 * (1 - f[:, 0]) * (1 - f[:, 1])
                + g01 * (1 - f[:, 0]) * f[:, 1]
                + g10 * f[:, 0] * (1 - f[:, 1])
                + g11 * f[:, 0] * f[:, 1]
            )

        return bil(self._a_grid), bil(self._ga1), bil(self._ga2)

    def residual(self, pts: torch.Tensor) -> torch.Tensor:
        bench = self.problem.benchmark
        meta = self.problem.meta
        if bench == "burgers":
            u = self.net(pts)
            g = _grad(u, pts)
            ux, ut = g[:, 0:1], g[:, 1:2]
            uxx = _grad(ux, pts)[:, 0:1]
            return ut + u * ux - meta["nu_hf"] * uxx
        if bench == "darcy":
            u = self.net(pts)
            g = _grad(u, pts)
            u1, u2 = g[:, 0:1], g[:, 1:2]
            u11 = _grad(u1, pts)[:, 0:1]
            u22 = _grad(u2, pts)[:, 1:2]
            a, ga1, ga2 = self._interp_a(pts.detach().numpy())
            a_t = torch.from_numpy(a).reshape(-1, 1)
            ga1_t = torch.from_numpy(ga1).reshape(-1, 1)
            ga2_t = torch.from_numpy(ga2).reshape(-1, 1)
            return -(ga1_t * u1 + ga2_t * u2 + a_t * (u11 + u22)) - meta["forcing"]
        # kolmogorov, stream-potential form
        psi = self.net(self._features(pts))
        g = _grad(psi, pts)
        p1, p2 = g[:, 0:1], g[:, 1:2]
        p11 = _grad(p1, pts)[:, 0:1]
        p22 = _grad(p2, pts)[:, 1:2]
        w = p11 + p22
        gw = _grad(w, pts)
        w1, w2, wg = gw[:, 0:1], gw[:, 1:2], gw[:, 2:3]
        w11 = _grad(w1, pts)[:, 0:1]
        w22 = _grad(w2, pts)[:, 1:2]
        v1, v2 = p2, -p1
        forcing = -4.0 * torch.cos(4.0 * pts[:, 1:2]) - 0.1 * w
        return wg + v1 * w1 + v2 * w2 - (w11 + w22) / meta["re"] - forcing


def _colloc_points(problem: PinnsProblem, n: int, rng: RngStream) -> np.ndarray:
    meta = problem.meta
    if problem.benchmark == "burgers":
        return rng.uniform(0.0, 1.0, (n, 2))
    if problem.benchmark == "darcy":
        return rng.uniform(0.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    pts[:, :2] = rng.uniform(0.0, 2.0 * np.pi, (n, 2))
    pts[:, 2] = rng.uniform(0.0, meta["horizon"], n)
    return pts


def _boundary_points(n: int, rng: RngStream) -> np.ndarray:
    t = rng.uniform(0.0, 1.0, n)
    side = rng.integers(0, 4, n)
    pts = np.empty((n, 2))
    pts[:, 0] = np.where(side == 0, 0.0, np.where(side == 1, 1.0, t))
    pts[:, 1] = np.where(side < 2, t, np.where(side == 2, 0.0, 1.0))
    return pts


def _dense_grid(problem: PinnsProblem) -> tuple[np.ndarray, tuple[int, ...], tuple[str, ...]]:
    meta = problem.meta
    if problem.benchmark == "burgers":
        nx, nt = meta["nx"], meta["nt"]
        xi = np.arange(nx) * meta["h"]
        ga = np.arange(nt) * meta["dt"]
        X, G = np.meshgrid(xi, ga, indexing="ij")
        return np.stack([X.ravel(), G.ravel()], 1), (nx, nt), ("space", "time")
    if problem.benchmark == "darcy":
        n = meta["n"]
        xi = np.arange(n) * meta["h"]
        X, Y = np.meshgrid(xi, xi, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], 1), (n, n), ("row", "col")
    n, fr = meta["n"], meta["frames"]
    xi = np.arange(n) * meta["h"]
    gs = (np.arange(fr) + 1) * meta["dgamma"]
    G, X1, X2 = np.meshgrid(gs, xi, xi, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel(), G.ravel()], 1)
    return pts, (fr, n, n), ("frame", "row", "col")


def evaluate_on_grid(net: CoordinateNet, problem: PinnsProblem, chunk: int = 8192) -> Field:
    model = _Model(net, problem)
    pts, dims, tags = _dense_grid(problem)
    needs_grad = problem.benchmark == "kolmogorov"
    out = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], chunk):
        p = torch.from_numpy(pts[lo : lo + chunk])
        if needs_grad:
            p.requires_grad_(True)
            out[lo : lo + chunk] = model.value(p).detach().numpy().ravel()
        else:
            with torch.no_grad():
                out[lo : lo + chunk] = model.value(p).numpy().ravel()
    return Field(out.reshape(dims), tags)


def pinns_fit(
    obs: ObservationSet,
    problem: PinnsProblem,
    cfg: PinnsConfig,
    rng: RngStream,
) -> tuple[CoordinateNet, Field]:
    """Optimize a coordinate net on observation MSE + residual MSE and
    return it together with its dense-grid evaluation."""
    if obs.is_empty:
        raise ValueError("empty observation set")
    in_dim = {"burgers": 2, "darcy": 2, "kolmogorov": 5}[problem.benchmark]
    net = init_coordinate_net(in_dim, cfg, rng.fork("init"))
    model = _Model(net, problem)
    obs_pts, obs_y = _obs_coords(obs, problem)
    obs_pts.requires_grad_(problem.benchmark == "kolmogorov")
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    best_loss = math.inf
    best_state = copy.deepcopy(net.state_dict())
    for epoch in range(cfg.epochs):
        rng_e = rng.fork(f"ep{epoch:08d}")
        opt.zero_grad(set_to_none=True)
        loss = torch.zeros((), dtype=DTYPE)
        if cfg.lam_obs > 0:
            pred = model.value(obs_pts)
            loss = loss + cfg.lam_obs * torch.mean((pred - obs_y) ** 2)
        if cfg.lam_phys > 0:
            pts = torch.from_numpy(_colloc_points(problem, cfg.n_colloc, rng_e.fork("colloc")))
            pts.requires_grad_(True)
            loss = loss + cfg.lam_phys * torch.mean(model.residual(pts) ** 2)
        if problem.benchmark == "darcy" and cfg.lam_bc > 0:
            bpts = torch.from_numpy(_boundary_points(cfg.n_bc, rng_e.fork("bc")))
            loss = loss + cfg.lam_bc * torch.mean(net(bpts) ** 2)
        if not torch.isfinite(loss):
            break  # abort with best-so-far
        loss.backward()
        if cfg.clip_norm is not None:
            torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.clip_norm)
        opt.step()
        lv = float(loss.detach())
        if lv < best_loss:
            best_loss = lv
            best_state = copy.deepcopy(net.state_dict())
    net.load_state_dict(best_state)
    return net, evaluate_on_grid(net, problem)
