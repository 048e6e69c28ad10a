"""Bridge sampling and the surrogate-refresh trainer.

The sampler walks the bridge time grid tau_t = t/T with forward Euler
steps of the learned velocity, re-imposing the hard observation
projection after every step and injecting sqrt(eps*s) noise on all but
the final step, so its output satisfies H(x) = y bit-exactly.

Training never reads a high-fidelity field.  Each iteration draws a
surrogate endpoint from a slowly refreshed static copy of the network,
forms a projected Brownian-bridge state between the low-fidelity input
and that endpoint, reconstructs with the trainable sampler, and descends
the RMS of the discretized PDE residual of the reconstruction.
"""

from __future__ import annotations

import copy
import dataclasses
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .fields import Field, NumericalError, RngStream
from .net import (
    NetConfig,
    VelocityNet,
    field_to_tensor,
    flatten,
    init_params,
    save_checkpoint,
    tensor_to_field,
    unflatten_,
)
from .observation import ObservationSet
from .pde.dataset import DatasetManifest, load_sample
from .residuals import (
    burgers_residual_op,
    darcy_residual_op,
    kolmogorov_residual_op,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

METRICS_COLUMNS = ("iter", "refresh_round", "loss_rms", "surrogate_residual_rms", "seconds")


@dataclass(frozen=True)
class BridgeState:
    """A field pinned to a node of the bridge-time grid tau_t = t/T."""

    x: Field
    t: int
    T: int

    def __post_init__(self):
        if not (2 <= self.T):
            raise ValueError("need at least 2 bridge-time steps")
        if not (0 <= self.t <= self.T):
            raise ValueError(f"bridge index {self.t} outside [0, {self.T}]")

    @property
    def tau(self) -> float:
        return self.t / self.T


@dataclass
class TrainConfig:
    bridge_steps: int = 10
    noise_scale: float = 1e-2
    refresh_period: int = 100
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    batch_size: int = 4
    iterations: int = 1000

    def __post_init__(self):
        if self.bridge_steps < 2:
            raise ValueError("need at least 2 bridge-time steps")
        if self.noise_scale <= 0:
            raise ValueError("noise scale must be > 0")
        if self.refresh_period < 1:
            raise ValueError("refresh period must be >= 1")

    @property
    def refresh_rounds(self) -> int:
        return -(-self.iterations // self.refresh_period)

    @classmethod
    def from_trainer_dict(cls, d: dict) -> "TrainConfig":
        keys = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in keys})


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    clip_norm: float | None = None,
) -> tuple[np.ndarray, AdamState]:
    """Global-norm clipping followed by a bias-corrected Adam update."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads, and optimizer state must share one shape")
    g = grads
    if clip_norm is not None and clip_norm > 0:
        norm = float(np.linalg.norm(g))
        if norm > clip_norm:
            g = g * (clip_norm / norm)
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new_params, AdamState(m, v, t)


def brownian_bridge_sample(
    x0: Field, x1: Field, tau: float, eps: float, rng: RngStream
) -> Field:
    """Pinned-endpoint Gaussian: mean (1-tau) x0 + tau x1, variance
    eps*tau*(1-tau) per coordinate; exact at tau in {0, 1}."""
    if x0.dims != x1.dims:
        raise ValueError(f"endpoint dims differ: {x0.dims} vs {x1.dims}")
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if tau == 0.0:
        return x0
    if tau == 1.0:
        return x1
    mean = (1.0 - tau) * x0.values + tau * x1.values
    std = math.sqrt(eps * tau * (1.0 - tau))
    return Field(mean + std * rng.standard_normal(x0.dims), x0.axis_tags)


def _project_t(x: torch.Tensor, mask: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return torch.where(mask, y, x)


def sample_theta_t(
    x_start: torch.Tensor,
    t0: int,
    mask: torch.Tensor,
    y: torch.Tensor,
    net: VelocityNet,
    T: int,
    eps: float,
    rng: RngStream,
    stats: dict | None = None,
) -> torch.Tensor:
    """Hard-conditioned sampler on (1, C, H, W) tensors; differentiable in net."""
    if not (0 <= t0 <= T - 1):
        raise ValueError(f"start index {t0} outside [0, {T - 1}]")
    s = 1.0 / T
    n_eval = n_proj = 0
    x = _project_t(x_start, mask, y)
    for t in range(t0, T - 1):
        u = net(x, t / T)
        n_eval += 1
        x = _project_t(x + s * u, mask, y)
        n_proj += 1
        z = torch.from_numpy(rng.standard_normal(tuple(x.shape)))
        x = x + math.sqrt(eps * s) * z
    u = net(x, (T - 1) / T)
    n_eval += 1
    x = _project_t(x + s * u, mask, y)
    n_proj += 1
    if stats is not None:
        stats["velocity_evals"] = n_eval
        stats["projections"] = n_proj
    return x


def _obs_tensors(obs: ObservationSet) -> tuple[torch.Tensor, torch.Tensor]:
    mask = field_to_tensor(obs.mask) == 1.0
    y = field_to_tensor(obs.values)
    return mask, y


def sample_theta(
    x_start: Field,
    t0: int,
    obs: ObservationSet,
    net: VelocityNet,
    cfg: TrainConfig,
    rng: RngStream,
    stats: dict | None = None,
) -> Field:
    """Run the hard-conditioned sampler from bridge index t0 to the end."""
    mask, y = _obs_tensors(obs)
    with torch.no_grad():
        out = sample_theta_t(
            field_to_tensor(x_start), t0, mask, y, net,
            cfg.bridge_steps, cfg.noise_scale, rng, stats,
        )
    return tensor_to_field(out, x_start)


def infer(
    x0: Field,
    obs: ObservationSet,
    net: VelocityNet,
    cfg: TrainConfig,
    rng: RngStream,
) -> Field:
    """Amortized reconstruction: the full sampler chain from the LF input."""
    return sample_theta(x0, 0, obs, net, cfg, rng)


def bridge_matching_loss(v_pred: Field, x_tau: Field, x1: Field, tau: float) -> float:
    """RMS mismatch with the bridge drift (x1 - x_tau)/(1 - tau); diagnostic only."""
    if tau >= 1.0:
        raise ValueError("bridge drift undefined at tau = 1")
    target = (x1.values - x_tau.values) / (1.0 - tau)
    d = v_pred.values - target
    return float(np.sqrt(np.mean(d * d)))


# ---------------------------------------------------------------------------
# Training


def net_config_for(benchmark: str, frames: int, trainer: dict) -> NetConfig:
    return NetConfig(
        in_channels=frames if benchmark == "kolmogorov" else 1,
        enc_channels=tuple(trainer.get("enc_channels", (16, 32))),
        dec_channels=tuple(trainer.get("dec_channels", (32, 16))),
        d_cond=trainer.get("d_cond", 8),
        time_hidden=trainer.get("time_hidden", 16),
        padding_mode="reflect" if benchmark == "darcy" else "circular",
    )


def residual_op_for_sample(benchmark: str, sample: dict):
    meta = sample["meta"]
    if benchmark == "burgers":
        return burgers_residual_op(meta["nu_hf"], meta["h"], meta["dt"])
    if benchmark == "darcy":
        return darcy_residual_op(sample["perm"], meta["forcing"], meta["h"])
    if benchmark == "kolmogorov":
        return kolmogorov_residual_op(meta["re"], meta["dgamma"])
    raise ValueError(f"unknown benchmark {benchmark!r}")


def _residual_rms_t(residual_op, x_field_shaped: torch.Tensor) -> torch.Tensor:
    res, valid = residual_op(x_field_shaped)
    return torch.sqrt(torch.mean(res[valid] ** 2))


def _as_field_shape(x: torch.Tensor, benchmark: str) -> torch.Tensor:
    return x[0] if benchmark == "kolmogorov" else x[0, 0]


@dataclass
class TrainResult:
    net: VelocityNet
    metrics: list[dict]
    checkpoints: list[Path]
    aborted: bool = False


def train_picsb(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    rng: RngStream,
    out_dir: str | Path,
    init_net: VelocityNet | None = None,
) -> TrainResult:
    """Surrogate-refresh residual training over the manifest's train split.

    Reads only lf/mask/obsvals (plus the Darcy permeability); HF files are
    never opened.  Emits one metrics row per iteration and a checkpoint per
    refresh round.  A non-finite loss aborts with the last good parameters.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.config.save(out_dir / "config.json")
    benchmark = manifest.benchmark
    data = [
        load_sample(d, benchmark, with_hf=False)
        for d in manifest.sample_dirs("train")
    ]
    if not data:
        raise ValueError("manifest has no training samples")
    ops = [residual_op_for_sample(benchmark, s) for s in data]
    tensors = [
        (field_to_tensor(s["lf"]), *_obs_tensors(s["obs"])) for s in data
    ]

    if init_net is None:
        net_cfg = net_config_for(benchmark, manifest.config.frames, manifest.config.trainer)
        net = init_params(net_cfg, rng.fork("init"))
    else:
        net = init_net
    static = copy.deepcopy(net)

    params = flatten(net)
    adam = AdamState.zeros(params.size)
    metrics: list[dict] = []
    checkpoints: list[Path] = []
    rng_header = {"seed": rng.seed, "stream_id": rng.stream_id}
    last_good = params.copy()
    T, eps = cfg.bridge_steps, cfg.noise_scale
    aborted = False

    for it in range(cfg.iterations):
        t_start = time.perf_counter()
        round_k = it // cfg.refresh_period
        if it % cfg.refresh_period == 0:
            static.load_state_dict(net.state_dict())
            ck = out_dir / f"ckpt_round_{round_k:04d}.pckp"
            save_checkpoint(ck, net, step=it, rng_state=rng_header)
            checkpoints.append(ck)

        rng_it = rng.fork(f"it{it:08d}")
        idx = rng_it.integers(0, len(data), cfg.batch_size)
        losses = []
        surrogate_rms = []
        for b, i in enumerate(np.atleast_1d(idx)):
            rng_b = rng_it.fork(f"b{b}")
            x0_t, mask_t, y_t = tensors[i]
            with torch.no_grad():
                x1_sur = sample_theta_t(
                    x0_t, 0, mask_t, y_t, static, T, eps, rng_b.fork("surrogate")
                )
                surrogate_rms.append(
                    float(_residual_rms_t(ops[i], _as_field_shape(x1_sur, benchmark)))
                )
            u = float(rng_b.uniform())
            t_idx = min(int(u * T), T - 1)
            tau = t_idx / T
            z = torch.from_numpy(rng_b.fork("bridge").standard_normal(tuple(x0_t.shape)))
            mean = (1.0 - tau) * x0_t + tau * x1_sur
            x_tau = mean + math.sqrt(eps * tau * (1.0 - tau)) * z
            x_tau = _project_t(x_tau, mask_t, y_t)
            x_hat = sample_theta_t(
                x_tau, t_idx, mask_t, y_t, net, T, eps, rng_b.fork("recon")
            )
            losses.append(_residual_rms_t(ops[i], _as_field_shape(x_hat, benchmark)))

        loss = torch.stack(losses).mean()
        loss_val = float(loss.detach())
        if not torch.isfinite(loss):
            unflatten_(net, last_good)
            ck = out_dir / "ckpt_final.pckp"
            save_checkpoint(ck, net, step=it, rng_state=rng_header)
            checkpoints.append(ck)
            _write_metrics(out_dir / "metrics.csv", metrics)
            aborted = True
            break
        net.zero_grad(set_to_none=True)
        loss.backward()
        grads = np.concatenate([
            (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1).numpy()
            for p in net.parameters()
        ])
        params, adam = adam_step(params, grads, adam, cfg.learning_rate, cfg.clip_norm)
        unflatten_(net, params)
        last_good = params.copy()
        metrics.append({
            "iter": it,
            "refresh_round": round_k,
            "loss_rms": loss_val,
            "surrogate_residual_rms": float(np.mean(surrogate_rms)),
            "seconds": time.perf_counter() - t_start,
        })

    if not aborted:
        ck = out_dir / "ckpt_final.pckp"
        save_checkpoint(ck, net, step=cfg.iterations, rng_state=rng_header)
        checkpoints.append(ck)
        _write_metrics(out_dir / "metrics.csv", metrics)
    result = TrainResult(net=net, metrics=metrics, checkpoints=checkpoints, aborted=aborted)
    if aborted:
        raise NumericalError(
            f"training loss went non-finite; last good checkpoint at {checkpoints[-1]}"
        )
    return result


def _write_metrics(path: Path, rows: list[dict]) -> None:
    lines = [",".join(METRICS_COLUMNS)]
    for r in rows:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c])
                              for c in METRICS_COLUMNS))
    path.write_text("\n".join(lines) + "\n")
