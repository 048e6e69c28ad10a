"""Grid fields, splittable random streams, experiment configs, and the FGRD binary format.

Everything downstream (solvers, masks, the trainer, checkpoints) builds on the
three types here.  All field data is float64; the on-disk FGRD layout is

    bytes 0..7    magic  b"FGRD0001"
    bytes 8..11   rank r          (uint32, little-endian)
    next 4*r      dims            (uint32 each, little-endian)
    rest          values          (float64, little-endian, row-major)

and round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FGRD_MAGIC = b"FGRD0001"
_MASK64 = (1 << 64) - 1

BENCHMARKS = ("burgers", "darcy", "kolmogorov")
REGIMES = ("R1", "R2", "R3")


class NumericalError(RuntimeError):
    """Raised when a solver or sampler produced non-finite state."""


@dataclass(frozen=True, eq=False)
class Field:
    """Dense real field on a regular grid.

    Axis order is [space, time] for 1D space-time fields and
    [frame,] row, column for 2D fields.  Values are immutable after
    construction and always finite.
    """

    values: np.ndarray
    axis_tags: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 0 or arr.size == 0:
            raise ValueError("empty dims")
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values in field")
        tags = self.axis_tags or tuple(f"axis{i}" for i in range(arr.ndim))
        if len(tags) != arr.ndim:
            raise ValueError(f"{len(tags)} axis tags for rank-{arr.ndim} field")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "axis_tags", tuple(tags))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Field):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.axis_tags == other.axis_tags
            and np.array_equal(self.values, other.values)
        )


def field_write(f: Field, path: str | Path) -> None:
    """Write a field in FGRD format (atomic: temp file + rename)."""
    path = Path(path)
    payload = np.ascontiguousarray(f.values, dtype="<f8")
    header = FGRD_MAGIC + struct.pack("<I", f.values.ndim)
    header += struct.pack(f"<{f.values.ndim}I", *f.values.shape)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(payload.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write FGRD file {path}: {exc}") from exc
    finally:
        if tmp.exists():
            tmp.unlink()


def field_read(path: str | Path, axis_tags: tuple[str, ...] = ()) -> Field:
    """Read an FGRD file, validating magic, rank, and payload length."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read FGRD file {path}: {exc}") from exc
    if len(raw) < 12 or raw[:8] != FGRD_MAGIC:
        raise ValueError(f"not an FGRD file: {path}")
    rank = struct.unpack_from("<I", raw, 8)[0]
    if rank == 0 or rank > 16:
        raise ValueError(f"bad rank {rank} in {path}")
    if len(raw) < 12 + 4 * rank:
        raise ValueError(f"truncated header in {path}")
    dims = struct.unpack_from(f"<{rank}I", raw, 12)
    offset = 12 + 4 * rank
    count = int(np.prod(dims))
    if len(raw) - offset != 8 * count:
        raise ValueError(
            f"size mismatch in {path}: dims {dims} need {8 * count} payload bytes, "
            f"found {len(raw) - offset}"
        )
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return Field(values.reshape(dims).astype(np.float64), axis_tags)


class RngStream:
    """Splittable counter-based random stream keyed by (seed, stream_id).

    Identical (seed, stream_id) yields identical draw sequences; `fork`
    derives an independent child stream from a label without consuming
    parent state.  A single stream must not be drawn from concurrently.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed, self.stream_id])
        )

    def fork(self, label: str) -> "RngStream":
        h = hashlib.blake2b(digest_size=8)
        h.update(self.stream_id.to_bytes(8, "little"))
        h.update(label.encode("utf-8"))
        return RngStream(self.seed, int.from_bytes(h.digest(), "little"))

    def standard_normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def rng_fork(parent: RngStream, label: str) -> RngStream:
    """Child stream deterministic in (parent, label)."""
    return parent.fork(label)


@dataclass
class ExperimentConfig:
    """Benchmark identity plus every knob needed to regenerate an artifact.

    Serialized as JSON with exactly these key names; round-trips losslessly.
    """

    benchmark: str
    grid: list[int]
    frames: int
    regime: str
    ratio: float
    solver: dict
    trainer: dict
    seed: int

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.benchmark!r}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not (0.0 < self.ratio <= 1.0):
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if not self.grid or any(int(d) <= 0 for d in self.grid):
            raise ValueError(f"grid dims must be positive, got {self.grid}")
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        self.grid = [int(d) for d in self.grid]
        self.frames = int(self.frames)
        self.seed = int(self.seed)

    def to_json(self) -> str:
        return json.dumps(
            {
                "benchmark": self.benchmark,
                "grid": self.grid,
                "frames": self.frames,
                "regime": self.regime,
                "ratio": self.ratio,
                "solver": self.solver,
                "trainer": self.trainer,
                "seed": self.seed,
            },
            indent=2,
            sort_keys=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


def default_trainer() -> dict:
    return {
        "bridge_steps": 10,
        "noise_scale": 1e-2,
        "refresh_period": 100,
        "learning_rate": 1e-3,
        "clip_norm": 1.0,
        "batch_size": 4,
        "iterations": 1000,
        "enc_channels": [16, 32],
        "dec_channels": [32, 16],
        "d_cond": 8,
        "time_hidden": 16,
    }


def default_config(benchmark: str, seed: int = 0) -> ExperimentConfig:
    """Desk-scale defaults; full-scale presets stay selectable via the solver dict."""
    trainer = default_trainer()
    if benchmark == "burgers":
        return ExperimentConfig(
            benchmark="burgers",
            grid=[256],
            frames=512,
            regime="R3",
            ratio=0.1,
            solver={"nu_hf": 0.01, "nu_lf": 0.1, "refine": 4},
            trainer=trainer,
            seed=seed,
        )
    if benchmark == "darcy":
        trainer = dict(trainer, learning_rate=1e-6, clip_norm=1e-5)
        return ExperimentConfig(
            benchmark="darcy",
            grid=[64, 64],
            frames=1,
            regime="R3",
            ratio=0.1,
            solver={"a_low": 3.0, "a_high": 12.0, "forcing": 1.0, "cg_rtol": 1e-10},
            trainer=trainer,
            seed=seed,
        )
    if benchmark == "kolmogorov":
        return ExperimentConfig(
            benchmark="kolmogorov",
            grid=[64, 64],
            frames=8,
            regime="R3",
            ratio=0.1,
            solver={"re": 1000.0, "horizon": 1.25, "cfl": 0.4},
            trainer=trainer,
            seed=seed,
        )
    raise ValueError(f"unknown benchmark {benchmark!r}")


def sha256_of_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(1 << 20)
            if not block:
                break
            h.update(block)
    return h.hexdigest()
