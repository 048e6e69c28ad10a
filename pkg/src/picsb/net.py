"""AdaIN-conditioned convolutional velocity field with a verified gradient contract.

The network maps a projected state tensor and a scalar bridge time to a
same-shape velocity: two stride-2 encoder blocks whose instance-norm
statistics are modulated by a conditioning vector, two upsampling decoder
blocks with skip connections, and a linear output convolution.  The
conditioning vector comes from a two-layer MLP on the raw scalar time.

Everything runs in float64 so finite-difference gradient checks hold at
1e-4 relative tolerance; `flatten`/`unflatten_` define the canonical
parameter order those checks (and the optimizer) use.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .fields import Field, RngStream

DTYPE = torch.float64
CKPT_MAGIC = b"PCKP0001"


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 1
    enc_channels: tuple[int, ...] = (128, 256)
    dec_channels: tuple[int, ...] = (256, 128)
    kernel: int = 3
    d_cond: int = 8
    time_hidden: int = 16
    in_eps: float = 1e-5
    padding_mode: str = "circular"  # "reflect" for non-periodic domains

    def __post_init__(self):
        if len(self.enc_channels) != len(self.dec_channels):
            raise ValueError("encoder and decoder channel lists must match in length")
        if any(c <= 0 for c in (*self.enc_channels, *self.dec_channels)):
            raise ValueError("channel counts must be positive")
        if self.in_channels <= 0 or self.d_cond <= 0 or self.time_hidden <= 0:
            raise ValueError("in_channels, d_cond, time_hidden must be positive")
        if self.padding_mode not in ("circular", "reflect"):
            raise ValueError(f"unsupported padding mode {self.padding_mode!r}")
        object.__setattr__(self, "enc_channels", tuple(self.enc_channels))
        object.__setattr__(self, "dec_channels", tuple(self.dec_channels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enc_channels"] = list(self.enc_channels)
        d["dec_channels"] = list(self.dec_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["enc_channels"] = tuple(d["enc_channels"])
        d["dec_channels"] = tuple(d["dec_channels"])
        return cls(**d)


def instance_norm(x: torch.Tensor, eps: float) -> torch.Tensor:
    """Per-sample, per-channel spatial normalization (epsilon-stabilized)."""
    mu = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
    return (x - mu) / torch.sqrt(var + eps)


class AdaInBlock(nn.Module):
    """Channel-wise scale/shift of instance-normalized activations,
    with (gamma, beta) produced linearly from the conditioning vector."""

    def __init__(self, channels: int, d_cond: int, eps: float):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.linear = nn.Linear(d_cond, 2 * channels, dtype=DTYPE)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if cond.shape[-1] != self.linear.in_features:
            raise ValueError(
                f"cond length {cond.shape[-1]} != d_cond {self.linear.in_features}"
            )
        if x.shape[1] != self.channels:
            raise ValueError(f"{x.shape[1]} channels, block expects {self.channels}")
        gb = self.linear(cond)
        gamma = gb[:, : self.channels, None, None]
        beta = gb[:, self.channels :, None, None]
        return gamma * instance_norm(x, self.eps) + beta


class VelocityNet(nn.Module):
    """v(x, tau): fully convolutional over the grid, conditioned on bridge time."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        c = config
        pad = c.kernel // 2
        conv = lambda ci, co, stride: nn.Conv2d(
            ci, co, c.kernel, stride=stride, padding=pad,
            padding_mode=c.padding_mode, dtype=DTYPE,
        )
        self.time_mlp = nn.Sequential(
            nn.Linear(1, c.time_hidden, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(c.time_hidden, c.d_cond, dtype=DTYPE),
        )
        chans = [c.in_channels, *c.enc_channels]
        self.enc_convs = nn.ModuleList(
            conv(chans[i], chans[i + 1], 2) for i in range(len(c.enc_channels))
        )
        self.adains = nn.ModuleList(
            AdaInBlock(ch, c.d_cond, c.in_eps) for ch in c.enc_channels
        )
        skips = [*c.enc_channels[-2::-1], c.in_channels]
        dec_in = [c.enc_channels[-1], *c.dec_channels[:-1]]
        self.dec_convs = nn.ModuleList(
            conv(dec_in[i] + skips[i], c.dec_channels[i], 1)
            for i in range(len(c.dec_channels))
        )
        self.final_conv = conv(c.dec_channels[-1], c.in_channels, 1)

    def time_embed(self, tau: float | torch.Tensor) -> torch.Tensor:
        if not torch.is_tensor(tau):
            tau = torch.tensor([[float(tau)]], dtype=DTYPE)
        return self.time_mlp(tau)

    def forward(self, x: torch.Tensor, tau: float | torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected (B, {self.config.in_channels}, H, W), got {tuple(x.shape)}"
            )
        if any(s % (2 ** len(self.config.enc_channels)) for s in x.shape[2:]):
            raise ValueError(f"grid dims {tuple(x.shape[2:])} not divisible by "
                             f"{2 ** len(self.config.enc_channels)}")
        cond = self.time_embed(tau)
        if cond.shape[0] == 1 and x.shape[0] > 1:
            cond = cond.expand(x.shape[0], -1)
        feats = [x]
        h = x
        for cv, ad in zip(self.enc_convs, self.adains):
            h = F.silu(ad(cv(h), cond))
            feats.append(h)
        feats.pop()  # bottleneck is the running state, not a skip
        for cv in self.dec_convs:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.silu(cv(torch.cat([h, feats.pop()], dim=1)))
        return self.final_conv(h)

    def ordered_linear_modules(self):
        """Modules in canonical init/draw order."""
        mods = [self.time_mlp[0], self.time_mlp[2]]
        for cv, ad in zip(self.enc_convs, self.adains):
            mods.extend([cv, ad.linear])
        mods.extend(self.dec_convs)
        mods.append(self.final_conv)
        return mods


def _xavier_bound(weight: torch.Tensor) -> float:
    fan_out = weight.shape[0] * int(np.prod(weight.shape[2:]))
    fan_in = weight.shape[1] * int(np.prod(weight.shape[2:]))
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(config: NetConfig, rng: RngStream) -> VelocityNet:
    """Xavier-uniform convolutions/linears, zero biases, AdaIN maps set to
    identity modulation (gamma=1, beta=0) at cond=0, and a zeroed output
    convolution so the untrained sampler is an identity transport of the
    projected prior."""
    net = VelocityNet(config)
    with torch.no_grad():
        for mod in net.ordered_linear_modules():
            a = _xavier_bound(mod.weight)
            w = rng.uniform(-a, a, tuple(mod.weight.shape))
            mod.weight.copy_(torch.from_numpy(w))
            mod.bias.zero_()
        for ad in net.adains:
            ad.linear.bias[: ad.channels].fill_(1.0)
        net.final_conv.weight.zero_()
    return net


def time_embed(tau: float, net: VelocityNet) -> np.ndarray:
    """Conditioning vector (length d_cond) for a scalar bridge time."""
    with torch.no_grad():
        return net.time_embed(float(tau)).numpy().ravel()


def adain(x: np.ndarray, cond: np.ndarray, block: AdaInBlock) -> np.ndarray:
    """Public wrapper over one AdaIN block for (C, H, W) activations."""
    with torch.no_grad():
        xt = torch.from_numpy(np.asarray(x, dtype=np.float64))[None]
        ct = torch.from_numpy(np.asarray(cond, dtype=np.float64))[None]
        return block(xt, ct)[0].numpy()


def field_to_tensor(f: Field) -> torch.Tensor:
    """(H, W) -> (1, 1, H, W); (F, H, W) -> (1, F, H, W)."""
    arr = np.array(f.values)
    if arr.ndim == 2:
        arr = arr[None]
    elif arr.ndim != 3:
        raise ValueError(f"cannot feed rank-{arr.ndim} field to the net")
    return torch.from_numpy(arr)[None]


def tensor_to_field(t: torch.Tensor, like: Field) -> Field:
    arr = t.detach().numpy().reshape(like.dims)
    return Field(arr, like.axis_tags)


def net_forward(x: Field, tau: float, net: VelocityNet) -> Field:
    """Velocity field for a projected state; same dims as the input."""
    with torch.no_grad():
        out = net(field_to_tensor(x), tau)
    return tensor_to_field(out, x)


def flatten(net: VelocityNet) -> np.ndarray:
    """Canonical flat parameter vector (named_parameters order)."""
    return torch.cat([p.detach().reshape(-1) for p in net.parameters()]).numpy().copy()


def unflatten_(net: VelocityNet, vec: np.ndarray) -> VelocityNet:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.size != parameter_count(net):
        raise ValueError(f"expected {parameter_count(net)} entries, got {vec.size}")
    offset = 0
    with torch.no_grad():
        for p in net.parameters():
            n = p.numel()
            p.copy_(torch.from_numpy(vec[offset : offset + n]).reshape(p.shape))
            offset += n
    return net


def parameter_count(net: VelocityNet) -> int:
    return sum(p.numel() for p in net.parameters())


def grad(loss_fn, net: VelocityNet) -> np.ndarray:
    """Reverse-mode gradient of loss_fn(net) with respect to the flat view.

    loss_fn must return a scalar torch tensor built from net's parameters;
    noise inside it must come from reconstructible streams so repeated
    evaluation is deterministic.  A constant (graph-free) loss yields the
    zero vector; a non-tensor loss is reported as an error.
    """
    net.zero_grad(set_to_none=True)
    loss = loss_fn(net)
    if not torch.is_tensor(loss):
        raise TypeError("loss_fn must return a torch scalar, got "
                        f"{type(loss).__name__}")
    if loss.ndim != 0:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise ValueError("loss is not finite; gradient undefined")
    if loss.grad_fn is not None:
        loss.backward()
    out = np.concatenate([
        (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1).numpy()
        for p in net.parameters()
    ])
    net.zero_grad(set_to_none=True)
    return out


def save_checkpoint(
    path: str | Path,
    net: VelocityNet,
    step: int = 0,
    rng_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    """FGRD-style container: magic, JSON header, flat float64 parameters."""
    header = {
        "net": net.config.to_dict(),
        "step": int(step),
        "rng": rng_state,
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    params = flatten(net).astype("<f8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(params.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> tuple[VelocityNet, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    net = VelocityNet(NetConfig.from_dict(header["net"]))
    vec = np.frombuffer(raw, dtype="<f8", offset=12 + hlen)
    unflatten_(net, vec.astype(np.float64))
    return net, header
