"""Evaluation metrics, the per-run results table, and wall-time benchmarking."""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bridge import residual_op_for_sample
from .fields import Field, field_read
from .observation import observation_misfit
from .pde.dataset import load_sample
from .residuals import ResidualField, residual_norm

CSV_COLUMNS = (
    "sample",
    "rel_error_percent",
    "residual_rms",
    "observation_misfit",
    "wall_seconds",
    "regime",
    "noise_alpha",
)


@dataclass
class MetricsRow:
    sample: str
    rel_error_percent: float
    residual_rms: float
    observation_misfit: float
    wall_seconds: float
    regime: str
    noise_alpha: float


def rel_error(x_hat: Field, x_ref: Field) -> float:
    """100 * ||x_hat - x_ref||_2 / ||x_ref||_2 over all entries."""
    if x_hat.dims != x_ref.dims:
        raise ValueError(f"dims differ: {x_hat.dims} vs {x_ref.dims}")
    ref_norm = float(np.linalg.norm(x_ref.values))
    if ref_norm == 0.0:
        raise ValueError("reference field has zero norm")
    return 100.0 * float(np.linalg.norm(x_hat.values - x_ref.values)) / ref_norm


def _field_residual_rms(pred: Field, benchmark: str, sample: dict) -> float:
    import torch

    op = residual_op_for_sample(benchmark, sample)
    with torch.no_grad():
        res, valid = op(torch.from_numpy(np.array(pred.values)))
    return residual_norm(ResidualField(res.numpy(), valid.numpy()))


def eval_run(
    pred_dir: str | Path,
    ref_dir: str | Path,
    benchmark: str,
    out_csv: str | Path | None = None,
    noise_alpha: float = 0.0,
) -> list[MetricsRow]:
    """Score predictions (pred_dir/sample_NNNN.fgrd) against a dataset split
    directory; appends a mean row and optionally writes the CSV."""
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    sample_dirs = sorted(d for d in ref_dir.iterdir() if d.is_dir())
    if not sample_dirs:
        raise ValueError(f"no sample directories under {ref_dir}")
    missing = [
        str(pred_dir / f"{d.name}.fgrd")
        for d in sample_dirs
        if not (pred_dir / f"{d.name}.fgrd").exists()
    ]
    if missing:
        raise FileNotFoundError("missing predictions: " + ", ".join(missing))
    timings = {}
    timing_file = pred_dir / "timings.json"
    if timing_file.exists():
        timings = json.loads(timing_file.read_text())

    rows = []
    for d in sample_dirs:
        sample = load_sample(d, benchmark, with_hf=True)
        pred = field_read(pred_dir / f"{d.name}.fgrd", sample["hf"].axis_tags)
        obs = sample["obs"]
        rows.append(
            MetricsRow(
                sample=d.name,
                rel_error_percent=rel_error(pred, sample["hf"]),
                residual_rms=_field_residual_rms(pred, benchmark, sample),
                observation_misfit=observation_misfit(pred, obs),
                wall_seconds=float(timings.get(d.name, float("nan"))),
                regime=sample["meta"]["regime"],
                noise_alpha=noise_alpha,
            )
        )
    mean_row = MetricsRow(
        sample="mean",
        rel_error_percent=float(np.mean([r.rel_error_percent for r in rows])),
        residual_rms=float(np.mean([r.residual_rms for r in rows])),
        observation_misfit=float(np.mean([r.observation_misfit for r in rows])),
        wall_seconds=float(np.mean([r.wall_seconds for r in rows])),
        regime=rows[0].regime,
        noise_alpha=noise_alpha,
    )
    rows.append(mean_row)
    if out_csv is not None:
        write_metrics_csv(out_csv, rows)
    return rows


def write_metrics_csv(path: str | Path, rows: list[MetricsRow]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r.sample},{r.rel_error_percent!r},{r.residual_rms!r},"
            f"{r.observation_misfit!r},{r.wall_seconds!r},{r.regime},{r.noise_alpha!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def bench_walltime(fn, repetitions: int = 3) -> float:
    """Median wall-clock seconds of fn() over the given repetitions."""
    if repetitions < 1:
        raise ValueError("need at least one repetition")
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)
