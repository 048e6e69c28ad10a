"""Dataset generation: HF/LF training pairs, masks, and the manifest.

Layout under the output root:

    <benchmark>/<split>/sample_NNNN/{lf.fgrd, hf.fgrd, mask.fgrd,
                                     obsvals.fgrd, meta.json}
    <benchmark>/manifest.json

Darcy samples additionally carry perm.fgrd (the per-sample permeability,
needed to evaluate residuals).  Each sample is generated on its own
forked stream; rerunning with the same config reproduces every file
byte-identically, which the manifest checksums record.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from ..fields import (
    ExperimentConfig,
    Field,
    RngStream,
    field_write,
    sha256_of_file,
)
from ..observation import ObservationSet, observe, sample_mask
from .burgers import (
    BurgersSpec,
    cfl_time_refine,
    make_lf_burgers,
    sample_burgers_ic,
    simulate_burgers,
)
from .darcy import DarcySpec, sample_darcy_permeability, solve_darcy
from .kolmogorov import KolmogorovSpec, sample_vorticity_ic, simulate_kolmogorov

SAMPLE_FILES = ("lf.fgrd", "hf.fgrd", "mask.fgrd", "obsvals.fgrd", "meta.json")


def _frames_view(arr: np.ndarray, tags: tuple[str, ...]) -> np.ndarray:
    """View of a field as (frames, *spatial): time axis last for Burgers
    space-time fields, frame axis first for Kolmogorov, single frame else."""
    if "time" in tags:
        ax = tags.index("time")
        return np.moveaxis(arr, ax, 0)
    if tags and tags[0] == "frame":
        return arr
    return arr[None]


def _nearest_fill(frame: np.ndarray, observed: np.ndarray) -> np.ndarray:
    if observed.all():
        return frame.copy()
    idx = distance_transform_edt(~observed, return_indices=True, return_distances=False)
    return frame[tuple(idx)]


def _cubic_smooth(frame: np.ndarray) -> np.ndarray:
    # separable cubic B-spline kernel [1, 4, 1] / 6 with edge replication
    out = frame
    for ax in range(frame.ndim):
        p = np.take(out, [0], axis=ax)
        q = np.take(out, [-1], axis=ax)
        padded = np.concatenate([p, out, q], axis=ax)
        lo = np.take(padded, range(0, frame.shape[ax]), axis=ax)
        hi = np.take(padded, range(2, frame.shape[ax] + 2), axis=ax)
        out = (lo + 4.0 * out + hi) / 6.0
    return out


def make_lf_interp(obs: ObservationSet, method: str) -> Field:
    """Full-grid provisional field from sparse observations.

    nearest: Voronoi fill; exact at every observed location.
    bicubic: nearest fill, one cubic-kernel smoothing pass, observations
    re-imposed so full coverage returns the observed field unchanged.
    """
    if method not in ("nearest", "bicubic"):
        raise ValueError(f"unknown interpolation method {method!r}")
    if obs.is_empty:
        raise ValueError("empty observation set")
    tags = obs.values.axis_tags
    vals = _frames_view(obs.values.values, tags)
    msk = _frames_view(obs.mask.values, tags) == 1.0
    out = np.empty_like(vals)
    for j in range(vals.shape[0]):
        if not msk[j].any():
            raise ValueError(f"frame {j} has no observed points")
        filled = _nearest_fill(vals[j], msk[j])
        if method == "bicubic":
            filled = _cubic_smooth(filled)
            filled[msk[j]] = vals[j][msk[j]]
        out[j] = filled
    if "time" in tags:
        out = np.moveaxis(out, 0, tags.index("time"))
    elif not (tags and tags[0] == "frame"):
        out = out[0]
    return Field(out, tags)


@dataclass
class DatasetManifest:
    benchmark: str
    config: ExperimentConfig
    data_std: float
    samples: list
    root: Path

    def sample_dirs(self, split: str) -> list[Path]:
        return [
            self.root / s["split"] / s["id"] for s in self.samples if s["split"] == split
        ]

    def save(self, path: Path) -> None:
        doc = {
            "benchmark": self.benchmark,
            "config": json.loads(self.config.to_json()),
            "data_std": self.data_std,
            "samples": self.samples,
        }
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)


def load_manifest(benchmark_dir: str | Path) -> DatasetManifest:
    benchmark_dir = Path(benchmark_dir)
    doc = json.loads((benchmark_dir / "manifest.json").read_text())
    return DatasetManifest(
        benchmark=doc["benchmark"],
        config=ExperimentConfig(**doc["config"]),
        data_std=doc["data_std"],
        samples=doc["samples"],
        root=benchmark_dir,
    )


def mask_stream(root: RngStream, regime: str, split: str, index: int) -> RngStream:
    """R1/R2 masks vary per sample; R3 masks come from one dataset-level stream."""
    if regime == "R3":
        return root.fork("mask/R3")
    return root.fork(f"mask/{split}/{index:04d}")


def _write_meta(path: Path, meta: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _gen_burgers_sample(cfg: ExperimentConfig, rng: RngStream, mask_rng: RngStream):
    nx, nt = cfg.grid[0], cfg.frames
    sv = cfg.solver
    spec = BurgersSpec(nx, nt, sv["nu_hf"])
    refine = int(sv.get("refine", 4))
    u0 = sample_burgers_ic(rng.fork("ic"), refine * nx)
    time_refine = cfl_time_refine(u0, spec)
    hf = simulate_burgers(u0, spec, time_refine)
    lf = make_lf_burgers(u0, spec, sv["nu_lf"], time_refine)
    m = sample_mask("R2" if cfg.regime == "R3" else cfg.regime, cfg.ratio, (nx,), nt, mask_rng)
    mask = Field(np.ascontiguousarray(m.T), ("space", "time"))
    obs = observe(hf, mask)
    meta = {
        "nx": nx,
        "nt": nt,
        "nu_hf": sv["nu_hf"],
        "nu_lf": sv["nu_lf"],
        "refine": refine,
        "time_refine": time_refine,
        "h": spec.h,
        "dt": spec.dt,
        "lf_method": "simulate_nu_lf",
    }
    return hf, lf, obs, meta, {}


def _gen_darcy_sample(cfg: ExperimentConfig, rng: RngStream, mask_rng: RngStream):
    n = cfg.grid[0]
    sv = cfg.solver
    spec = DarcySpec(n, sv.get("forcing", 1.0), sv.get("cg_rtol", 1e-10))
    a = sample_darcy_permeability(
        rng.fork("perm"), n, sv.get("a_low", 3.0), sv.get("a_high", 12.0)
    )
    hf = solve_darcy(a, spec)
    m = sample_mask("R1", cfg.ratio, (n, n), 1, mask_rng)
    mask = Field(m[0], ("row", "col"))
    obs = observe(hf, mask)
    lf = make_lf_interp(obs, "nearest")
    meta = {
        "n": n,
        "forcing": spec.forcing,
        "a_low": sv.get("a_low", 3.0),
        "a_high": sv.get("a_high", 12.0),
        "h": spec.h,
        "lf_method": "nearest",
    }
    return hf, lf, obs, meta, {"perm.fgrd": a}


def _gen_kolmogorov_sample(cfg: ExperimentConfig, rng: RngStream, mask_rng: RngStream):
    n = cfg.grid[0]
    sv = cfg.solver
    spec = KolmogorovSpec(
        n, cfg.frames, sv.get("re", 1000.0), sv.get("horizon", 1.25), sv.get("cfl", 0.4)
    )
    w0 = sample_vorticity_ic(rng.fork("ic"), n)
    hf = simulate_kolmogorov(w0, spec)
    regime = "R2" if cfg.regime == "R3" else cfg.regime
    m = sample_mask(regime, cfg.ratio, (n, n), cfg.frames, mask_rng)
    mask = Field(m, ("frame", "row", "col"))
    obs = observe(hf, mask)
    lf = make_lf_interp(obs, "bicubic")
    meta = {
        "n": n,
        "frames": cfg.frames,
        "re": spec.re,
        "horizon": spec.horizon,
        "h": spec.h,
        "dgamma": spec.dgamma,
        "lf_method": "bicubic",
    }
    return hf, lf, obs, meta, {}


_GENERATORS = {
    "burgers": _gen_burgers_sample,
    "darcy": _gen_darcy_sample,
    "kolmogorov": _gen_kolmogorov_sample,
}


def gen_dataset(
    config: ExperimentConfig,
    out_dir: str | Path,
    n_train: int = 32,
    n_test: int = 4,
) -> DatasetManifest:
    """Generate the full benchmark dataset and write its manifest."""
    root = RngStream(config.seed)
    bench_dir = Path(out_dir) / config.benchmark
    gen = _GENERATORS[config.benchmark]
    samples = []
    hf_squares, hf_count = 0.0, 0
    hf_sum = 0.0
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            sid = f"sample_{i:04d}"
            sdir = bench_dir / split / sid
            sdir.mkdir(parents=True, exist_ok=True)
            rng_s = root.fork(f"{split}/{i:04d}")
            hf, lf, obs, meta, extra = gen(config, rng_s, mask_stream(root, config.regime, split, i))
            meta.update({"benchmark": config.benchmark, "split": split, "id": sid,
                         "regime": config.regime, "ratio": config.ratio,
                         "seed": config.seed})
            field_write(lf, sdir / "lf.fgrd")
            field_write(hf, sdir / "hf.fgrd")
            field_write(obs.mask, sdir / "mask.fgrd")
            field_write(obs.values, sdir / "obsvals.fgrd")
            for name, fld in extra.items():
                field_write(fld, sdir / name)
            _write_meta(sdir / "meta.json", meta)
            if split == "train":
                hf_sum += hf.values.sum()
                hf_squares += (hf.values**2).sum()
                hf_count += hf.values.size
            files = sorted([*SAMPLE_FILES, *extra])
            samples.append({
                "split": split,
                "id": sid,
                "checksums": {f: sha256_of_file(sdir / f) for f in files},
            })
    mean = hf_sum / hf_count
    data_std = float(np.sqrt(hf_squares / hf_count - mean**2))
    manifest = DatasetManifest(
        benchmark=config.benchmark,
        config=config,
        data_std=data_std,
        samples=samples,
        root=bench_dir,
    )
    manifest.save(bench_dir / "manifest.json")
    return manifest


_AXIS_TAGS = {
    "burgers": ("space", "time"),
    "darcy": ("row", "col"),
    "kolmogorov": ("frame", "row", "col"),
}


def load_sample(sample_dir: str | Path, benchmark: str, with_hf: bool = True) -> dict:
    """Load one sample directory.  Training paths call with with_hf=False and
    never touch hf.fgrd."""
    from ..fields import field_read

    sdir = Path(sample_dir)
    tags = _AXIS_TAGS[benchmark]
    meta = json.loads((sdir / "meta.json").read_text())
    out = {
        "lf": field_read(sdir / "lf.fgrd", tags),
        "mask": field_read(sdir / "mask.fgrd", tags),
        "obsvals": field_read(sdir / "obsvals.fgrd", tags),
        "meta": meta,
    }
    out["obs"] = ObservationSet(mask=out["mask"], values=out["obsvals"])
    if benchmark == "darcy":
        out["perm"] = field_read(sdir / "perm.fgrd", tags)
    if with_hf:
        out["hf"] = field_read(sdir / "hf.fgrd", tags)
    return out
