"""Command-line surface.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .fields import (
    ExperimentConfig,
    Field,
    NumericalError,
    RngStream,
    default_config,
    field_read,
    field_write,
)
from .observation import perturb_observations


def _load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.load(path)


def _cmd_gen_data(args) -> int:
    if args.config:
        cfg = _load_config(args.config)
    elif args.benchmark:
        cfg = default_config(args.benchmark, seed=args.seed or 0)
    else:
        raise ValueError("gen-data needs --config or --benchmark")
    if args.seed is not None:
        cfg.seed = args.seed
    from .pde.dataset import gen_dataset

    manifest = gen_dataset(cfg, args.out, n_train=args.n_train, n_test=args.n_test)
    print(json.dumps({
        "benchmark": manifest.benchmark,
        "root": str(manifest.root),
        "train": len(manifest.sample_dirs("train")),
        "test": len(manifest.sample_dirs("test")),
        "data_std": manifest.data_std,
    }))
    return 0


def _cmd_train(args) -> int:
    from .bridge import TrainConfig, train_picsb
    from .net import load_checkpoint
    from .pde.dataset import load_manifest

    cfg = _load_config(args.config)
    manifest = load_manifest(args.data)
    tc = TrainConfig.from_trainer_dict(cfg.trainer)
    seed = args.seed if args.seed is not None else cfg.seed
    init_net = None
    if args.init_ckpt:
        init_net, _ = load_checkpoint(args.init_ckpt)
    result = train_picsb(manifest, tc, RngStream(seed).fork("train"), args.out,
                         init_net=init_net)
    final = result.metrics[-1]["loss_rms"] if result.metrics else float("nan")
    print(json.dumps({"iterations": len(result.metrics), "final_loss_rms": final,
                      "checkpoints": [str(c) for c in result.checkpoints[-1:]]}))
    return 0


def _noisy_sample(sample: dict, benchmark: str, alpha: float, data_std: float,
                  rng: RngStream) -> dict:
    """Perturb observed values; for interpolation-based LF benchmarks the LF
    input is rebuilt from the noisy observations."""
    from .pde.dataset import make_lf_interp

    noisy = perturb_observations(sample["obs"], alpha, data_std, rng)
    out = dict(sample, obs=noisy, obsvals=noisy.values)
    method = sample["meta"].get("lf_method")
    if method in ("nearest", "bicubic"):
        out["lf"] = make_lf_interp(noisy, method)
    return out


def _cmd_infer(args) -> int:
    from .bridge import TrainConfig, infer
    from .net import load_checkpoint
    from .pde.dataset import load_manifest, load_sample

    manifest = load_manifest(args.data)
    benchmark = manifest.benchmark
    net, header = load_checkpoint(args.ckpt)
    tc = TrainConfig.from_trainer_dict(manifest.config.trainer)
    seed = args.seed if args.seed is not None else manifest.config.seed
    rng = RngStream(seed).fork("infer")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    for d in manifest.sample_dirs(args.split):
        sample = load_sample(d, benchmark, with_hf=False)
        if args.noise_alpha > 0:
            sample = _noisy_sample(sample, benchmark, args.noise_alpha,
                                   manifest.data_std, rng.fork(f"noise/{d.name}"))
        t0 = time.perf_counter()
        pred = infer(sample["lf"], sample["obs"], net, tc, rng.fork(d.name))
        timings[d.name] = time.perf_counter() - t0
        field_write(pred, out_dir / f"{d.name}.fgrd")
    (out_dir / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    print(json.dumps({"samples": len(timings),
                      "mean_seconds": float(np.mean(list(timings.values())))}))
    return 0


def _cmd_eval(args) -> int:
    from .metrics import eval_run

    rows = eval_run(args.pred, args.ref, args.benchmark, args.out,
                    noise_alpha=args.noise_alpha)
    mean = rows[-1]
    print(json.dumps({
        "mean_rel_error_percent": mean.rel_error_percent,
        "mean_residual_rms": mean.residual_rms,
        "mean_observation_misfit": mean.observation_misfit,
        "csv": str(args.out) if args.out else None,
    }))
    return 0


def _cmd_baseline_pinns(args) -> int:
    from .baselines.pinns import PinnsConfig, pinns_fit, pinns_problem_for_sample
    from .pde.dataset import load_sample

    sdir = Path(args.sample)
    meta = json.loads((sdir / "meta.json").read_text())
    benchmark = meta["benchmark"]
    sample = load_sample(sdir, benchmark, with_hf=False)
    cfg = PinnsConfig(**json.loads(Path(args.config).read_text())) if args.config \
        else PinnsConfig()
    problem = pinns_problem_for_sample(benchmark, sample)
    rng = RngStream(args.seed if args.seed is not None else meta["seed"]).fork("pinns")
    t0 = time.perf_counter()
    _, pred = pinns_fit(sample["obs"], problem, cfg, rng)
    field_write(pred, args.out)
    print(json.dumps({"out": args.out, "seconds": time.perf_counter() - t0}))
    return 0


def _cmd_baseline_train_prior(args) -> int:
    from .baselines.guidance import train_edm_prior
    from .bridge import net_config_for
    from .net import save_checkpoint
    from .pde.dataset import load_manifest, load_sample

    manifest = load_manifest(args.data)
    lf = [load_sample(d, manifest.benchmark, with_hf=False)["lf"]
          for d in manifest.sample_dirs("train")]
    net_cfg = net_config_for(manifest.benchmark, manifest.config.frames,
                             manifest.config.trainer)
    seed = args.seed if args.seed is not None else manifest.config.seed
    den, losses = train_edm_prior(lf, net_cfg, RngStream(seed).fork("prior"),
                                  iters=args.iters, lr=args.lr)
    save_checkpoint(args.out, den.net, step=args.iters,
                    rng_state={"seed": seed}, extra={"sigma_data": den.sigma_data})
    print(json.dumps({"out": args.out, "first_loss": losses[0], "last_loss": losses[-1]}))
    return 0


def _cmd_baseline_guidance(args) -> int:
    from .baselines.guidance import Denoiser, GuidanceConfig, guidance_sample
    from .bridge import residual_op_for_sample
    from .net import load_checkpoint
    from .pde.dataset import load_sample

    sdir = Path(args.sample)
    meta = json.loads((sdir / "meta.json").read_text())
    benchmark = meta["benchmark"]
    sample = load_sample(sdir, benchmark, with_hf=False)
    net, header = load_checkpoint(args.prior)
    den = Denoiser(net, header["sigma_data"])
    cfg = GuidanceConfig(**json.loads(Path(args.config).read_text())) if args.config \
        else GuidanceConfig()
    rng = RngStream(args.seed if args.seed is not None else meta["seed"]).fork("guidance")
    boundary = None
    if benchmark == "darcy":
        n = meta["n"]
        boundary = np.zeros((n, n))
        boundary[0, :] = boundary[-1, :] = boundary[:, 0] = boundary[:, -1] = 1.0
    t0 = time.perf_counter()
    pred = guidance_sample(den, sample["obs"], residual_op_for_sample(benchmark, sample),
                           cfg, rng, boundary_mask=boundary)
    field_write(pred, args.out)
    print(json.dumps({"out": args.out, "seconds": time.perf_counter() - t0}))
    return 0


def _cmd_plot(args) -> int:
    from .plotting import plot_field

    f = field_read(args.field)
    out = plot_field(f, args.out, frame=args.frame, symmetric=args.symmetric)
    print(json.dumps({"out": str(out)}))
    return 0


def _cmd_check_residual(args) -> int:
    import torch

    from .bridge import residual_op_for_sample
    from .residuals import ResidualField, residual_norm

    if args.sample:
        from .pde.dataset import load_sample

        sdir = Path(args.sample)
        meta = json.loads((sdir / "meta.json").read_text())
        benchmark = meta["benchmark"]
        sample = load_sample(sdir, benchmark, with_hf=False)
    elif args.config and args.benchmark:
        cfg = _load_config(args.config)
        benchmark = args.benchmark
        if benchmark == "burgers":
            meta = {"nu_hf": cfg.solver["nu_hf"], "h": 1.0 / cfg.grid[0],
                    "dt": 1.0 / (cfg.frames - 1)}
        elif benchmark == "kolmogorov":
            meta = {"re": cfg.solver["re"],
                    "dgamma": cfg.solver.get("horizon", 1.25) / cfg.frames}
        else:
            raise ValueError("Darcy residuals need --sample (per-sample permeability)")
        sample = {"meta": meta}
    else:
        raise ValueError("check residual needs --sample, or --benchmark with --config")
    field = field_read(args.field)
    op = residual_op_for_sample(benchmark, sample)
    with torch.no_grad():
        res, valid = op(torch.from_numpy(np.array(field.values)))
    rf = ResidualField(res.numpy(), valid.numpy())
    print(json.dumps({
        "residual_rms": residual_norm(rf),
        "residual_max_abs": float(np.abs(rf.values[rf.valid_mask]).max()),
    }))
    return 0


def _cmd_check_floor(args) -> int:
    from .bridge import residual_op_for_sample
    from .pde.dataset import load_sample
    from .residuals import estimate_residual_floor

    sdir = Path(args.sample)
    meta = json.loads((sdir / "meta.json").read_text())
    benchmark = meta["benchmark"]
    sample = load_sample(sdir, benchmark, with_hf=False)
    est = estimate_residual_floor(
        sample["obs"], residual_op_for_sample(benchmark, sample), sample["lf"],
        iters=args.iters, step=args.step,
    )
    print(json.dumps({"floor": est.value, "iterations": est.iterations,
                      "converged": est.converged}))
    return 0 if est.converged else 3


def _cmd_check_gradcheck(args) -> int:
    from .testing import burgers_toy_gradcheck

    worst = float(burgers_toy_gradcheck(n_coords=args.coords, seed=args.seed or 0))
    print(json.dumps({"coords": args.coords, "worst_rel_error": worst,
                      "pass": bool(worst < 1e-4)}))
    return 0 if worst < 1e-4 else 3


def _cmd_bench(args) -> int:
    from .bridge import TrainConfig, infer
    from .metrics import bench_walltime
    from .net import load_checkpoint
    from .pde.dataset import load_manifest, load_sample

    manifest = load_manifest(args.data)
    net, _ = load_checkpoint(args.ckpt)
    tc = TrainConfig.from_trainer_dict(manifest.config.trainer)
    rng = RngStream(args.seed or 0)
    results = {}
    for d in manifest.sample_dirs(args.split):
        sample = load_sample(d, manifest.benchmark, with_hf=False)
        results[d.name] = bench_walltime(
            lambda: infer(sample["lf"], sample["obs"], net, tc, rng.fork(d.name)),
            repetitions=args.reps,
        )
    print(json.dumps({"median_seconds": results,
                      "mean": float(np.mean(list(results.values())))}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="picsb", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("gen-data", help="generate a benchmark dataset")
    g.add_argument("--config")
    g.add_argument("--benchmark", choices=["burgers", "darcy", "kolmogorov"])
    g.add_argument("--out", required=True)
    g.add_argument("--n-train", type=int, default=32)
    g.add_argument("--n-test", type=int, default=4)
    add_common(g)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="train the bridge sampler")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--init-ckpt")
    add_common(t)
    t.set_defaults(func=_cmd_train)

    i = sub.add_parser("infer", help="reconstruct a dataset split")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--split", default="test")
    i.add_argument("--noise-alpha", type=float, default=0.0)
    add_common(i)
    i.set_defaults(func=_cmd_infer)

    e = sub.add_parser("eval", help="score predictions against references")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--benchmark", required=True)
    e.add_argument("--out")
    e.add_argument("--noise-alpha", type=float, default=0.0)
    e.set_defaults(func=_cmd_eval)

    b = sub.add_parser("baseline", help="comparison methods")
    bsub = b.add_subparsers(dest="baseline", required=True)
    bp = bsub.add_parser("pinns")
    bp.add_argument("--sample", required=True)
    bp.add_argument("--config")
    bp.add_argument("--out", required=True)
    add_common(bp)
    bp.set_defaults(func=_cmd_baseline_pinns)
    bt = bsub.add_parser("train-prior")
    bt.add_argument("--data", required=True)
    bt.add_argument("--out", required=True)
    bt.add_argument("--iters", type=int, default=2000)
    bt.add_argument("--lr", type=float, default=1e-3)
    add_common(bt)
    bt.set_defaults(func=_cmd_baseline_train_prior)
    bg = bsub.add_parser("guidance")
    bg.add_argument("--prior", required=True)
    bg.add_argument("--sample", required=True)
    bg.add_argument("--config")
    bg.add_argument("--out", required=True)
    add_common(bg)
    bg.set_defaults(func=_cmd_baseline_guidance)

    pl = sub.add_parser("plot", help="emit a heatmap PNG")
    pl.add_argument("--field", required=True)
    pl.add_argument("--frame", type=int, default=None)
    pl.add_argument("--symmetric", action="store_true")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=_cmd_plot)

    c = sub.add_parser("check", help="diagnostics")
    csub = c.add_subparsers(dest="check", required=True)
    cr = csub.add_parser("residual")
    cr.add_argument("--field", required=True)
    cr.add_argument("--benchmark")
    cr.add_argument("--config")
    cr.add_argument("--sample")
    cr.set_defaults(func=_cmd_check_residual)
    cf = csub.add_parser("floor")
    cf.add_argument("--sample", required=True)
    cf.add_argument("--iters", type=int, default=500)
    cf.add_argument("--step", type=float, default=1e-3)
    cf.set_defaults(func=_cmd_check_floor)
    cg = csub.add_parser("gradcheck")
    cg.add_argument("--coords", type=int, default=20)
    add_common(cg)
    cg.set_defaults(func=_cmd_check_gradcheck)

    bn = sub.add_parser("bench", help="median inference wall time per sample")
    bn.add_argument("--ckpt", required=True)
    bn.add_argument("--data", required=True)
    bn.add_argument("--split", default="test")
    bn.add_argument("--reps", type=int, default=3)
    add_common(bn)
    bn.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
