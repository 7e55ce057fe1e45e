"""Command line interface.

Subcommands: compute-rate, solve-schedule, sample, evaluate, sweep,
toy-figure.  Exit codes: 0 on success, 2 on validation errors, 1 on
runtime errors.  Commands are idempotent: rerunning with the same seed and
config reproduces the primary output files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .diffusion import PointDataset, PosteriorMeanPredictor
from .evaluate import (
    ExperimentConfig,
    SweepGrid,
    assert_mode_transition,
    count_density_modes,
    density_matrix,
    parse_sampler,
    provenance,
    report_to_csv,
    resolve_dataset,
    resolve_sampling_alphas,
    run_evaluation,
    run_sweep,
)
from .rates import VxConfig, compute_v_eps, compute_v_fid, compute_v_klub, compute_v_x, power_grid
from .samplers import SamplerSpec, sample
from .schedule import MetricWeight, RateTable, combine_rates, solve_schedule
from .util import config_hash

RATE_METRICS = ("v_fid", "v_x", "v_eps", "v_klub")


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def cmd_compute_rate(args) -> int:
    cfg = _load_config(args.config)
    dataset_name = args.dataset or cfg.get("dataset")
    metric = args.metric or cfg.get("metric")
    if dataset_name is None or metric is None:
        raise ValueError("compute-rate needs --dataset and --metric (or a config providing them)")
    if metric not in RATE_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {RATE_METRICS}")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    dataset = resolve_dataset(dataset_name)
    meta = {"dataset": dataset_name, "metric": metric, "seed": seed}
    if metric == "v_fid":
        steps = args.steps if args.steps is not None else cfg.get("steps", 1000)
        n_samples = args.samples if args.samples is not None else cfg.get("samples", 10_000)
        grid_power = args.grid_power if args.grid_power is not None else cfg.get("grid_power", 2.0)
        table = compute_v_fid(dataset, power_grid(steps, grid_power), n_samples, seed)
        meta.update({"steps": steps, "samples": n_samples, "grid_power": grid_power})
    else:
        vx = VxConfig(
            steps=args.steps if args.steps is not None else cfg.get("steps", 1000),
            n_samples=args.samples if args.samples is not None else cfg.get("samples", 10_000),
            alpha_start=args.alpha_start if args.alpha_start is not None else cfg.get("alpha_start", 1.0),
            alpha_end=args.alpha_end if args.alpha_end is not None else cfg.get("alpha_end", 1e-4),
        )
        fn = {"v_x": compute_v_x, "v_eps": compute_v_eps, "v_klub": compute_v_klub}[metric]
        table = fn(dataset, PosteriorMeanPredictor(dataset), vx, seed)
        meta.update(
            {
                "steps": vx.steps,
                "samples": vx.n_samples,
                "alpha_start": vx.alpha_start,
                "alpha_end": vx.alpha_end,
            }
        )
    out_dir = args.out_dir or cfg.get("out_dir", ".")
    base = os.path.join(out_dir, metric)
    _write(base + ".csv", table.to_csv())
    _write(base + ".json", table.to_json())
    sidecar = {
        "config": meta,
        "config_hash": config_hash(meta),
        "seed": seed,
        "code_version": __version__,
        "stderr": table.stderr.tolist() if table.stderr is not None else None,
    }
    _write(base + "_meta.json", json.dumps(sidecar, indent=2) + "\n")
    print(f"wrote {base}.csv ({table.alphas.size} knots)")
    return 0


def cmd_solve_schedule(args) -> int:
    tables = []
    for path in args.rate:
        with open(path) as fh:
            text = fh.read()
        tables.append(RateTable.from_json(text) if path.endswith(".json") else RateTable.from_csv(text))
    weights = _floats(args.weights) if args.weights else [1.0] * len(tables)
    exponents = _floats(args.exponents) if args.exponents else [1.0] * len(tables)
    if len(weights) != len(tables) or len(exponents) != len(tables):
        raise ValueError("need one weight and one exponent per rate file")
    if len(tables) == 1:
        schedule = solve_schedule(tables[0], exponents[0], args.alpha_max, args.alpha_min, args.knots)
    else:
        components = [(t, MetricWeight(w, x)) for t, w, x in zip(tables, weights, exponents)]
        combined = combine_rates(components, alpha_min=args.alpha_min, alpha_max=args.alpha_max)
        # per-metric exponents are already inside the combination
        schedule = solve_schedule(combined, 1.0, args.alpha_max, args.alpha_min, args.knots)
    _write(args.out, schedule.to_json() if args.out.endswith(".json") else schedule.to_csv())
    print(f"wrote {args.out} (alpha: {schedule.alpha_max:g} -> {schedule.alpha_min:g}, {args.knots} knots)")
    return 0


def cmd_sample(args) -> int:
    dataset = resolve_dataset(args.dataset)
    kind, eta = parse_sampler(args.sampler)
    ladder = resolve_sampling_alphas(args.schedule, args.nfe)
    spec = SamplerSpec(kind, ladder, eta)
    samples = sample(dataset, spec, args.n, args.seed)
    lines = [",".join(f"{v:.16e}" for v in row) for row in samples]
    _write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out} ({samples.shape[0]} samples, NFE={spec.nfe})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    overrides = {
        "dataset": args.dataset,
        "schedules": args.schedules.split(",") if args.schedules else None,
        "sampler": args.sampler,
        "nfes": [int(n) for n in args.nfes.split(",")] if args.nfes else None,
        "n_samples": args.n_samples,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    config = ExperimentConfig.from_dict(cfg, overrides)
    report = run_evaluation(config)
    out_dir = config.out_dir or "."
    _write(os.path.join(out_dir, "report.csv"), report_to_csv(report))
    _write(os.path.join(out_dir, "report.json"), json.dumps(report, indent=2) + "\n")
    print(f"wrote {os.path.join(out_dir, 'report.csv')} ({len(report['rows'])} cells)")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    rates = cfg.get("rates")
    if not rates or len(rates) != 2:
        raise ValueError("sweep config needs a 'rates' list with exactly two entries (paths or metric names)")
    dataset = resolve_dataset(cfg["dataset"])
    seed = cfg.get("seed", 0)
    tables = []
    for entry in rates:
        if entry in RATE_METRICS:
            predictor = PosteriorMeanPredictor(dataset)
            if entry == "v_fid":
                table = compute_v_fid(
                    dataset, power_grid(cfg.get("rate_steps", 1000), cfg.get("grid_power", 2.0)),
                    cfg.get("rate_samples", 10_000), seed,
                )
            else:
                fn = {"v_x": compute_v_x, "v_eps": compute_v_eps, "v_klub": compute_v_klub}[entry]
                table = fn(
                    dataset, predictor,
                    VxConfig(steps=cfg.get("rate_steps", 1000), n_samples=cfg.get("rate_samples", 10_000)),
                    seed,
                )
        else:
            with open(entry) as fh:
                text = fh.read()
            table = RateTable.from_json(text) if entry.endswith(".json") else RateTable.from_csv(text)
        tables.append(table)
    grid = SweepGrid(
        stage1_weights=tuple(cfg.get("stage1_weights", SweepGrid.stage1_weights)),
        stage2_exponents=tuple(cfg.get("stage2_exponents", SweepGrid.stage2_exponents)),
    )
    report = run_sweep(
        (tables[0], tables[1]),
        grid,
        dataset,
        sampler=cfg.get("sampler", "ddim:0"),
        nfe=cfg.get("nfe", 5),
        n_samples=cfg.get("n_samples", 10_000),
        seed=seed,
        alpha_max=cfg.get("alpha_max", 1.0),
        alpha_min=cfg.get("alpha_min", 0.01),
    )
    out_dir = args.out_dir or cfg.get("out_dir", ".")
    _write(os.path.join(out_dir, "sweep.csv"), report_to_csv(report))
    _write(os.path.join(out_dir, "sweep.json"), json.dumps(report, indent=2) + "\n")
    best = report["best"]
    print(
        f"wrote {os.path.join(out_dir, 'sweep.csv')}; best weights "
        f"({best['w_a']:g}, {best['w_b']:g}), exponents ({best['xi_a']:g}, {best['xi_b']:g}), "
        f"error {best['error']:.6g}"
    )
    return 0


def _parse_grid(text: str, endpoint_count: int = 3) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != endpoint_count:
        raise ValueError(f"grid spec must look like start:stop:count, got {text!r}")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 2:
        raise ValueError("grid needs at least 2 points")
    return np.linspace(start, stop, count)


def cmd_toy_figure(args) -> int:
    dataset = resolve_dataset(args.dataset)
    alpha_grid = _parse_grid(args.alphas)
    x_grid = _parse_grid(args.xgrid)
    matrix = density_matrix(dataset, alpha_grid, x_grid)
    counts = [count_density_modes(row) for row in matrix]
    if args.dataset == "toy3":
        assert_mode_transition(counts)
    header = "alpha," + ",".join(f"{x:.16e}" for x in x_grid)
    lines = [header]
    for alpha, row in zip(alpha_grid, matrix):
        lines.append(f"{alpha:.16e}," + ",".join(f"{v:.16e}" for v in row))
    _write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}; mode counts {counts[0]} -> {counts[-1]} over {alpha_grid.size} alpha rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crsched", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crsched {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-rate", help="estimate a rate table on a dataset")
    p.add_argument("--config", help="JSON config; flags override its fields")
    p.add_argument("--dataset", help="builtin name or CSV path")
    p.add_argument("--metric", help="one of " + ", ".join(RATE_METRICS))
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="trajectories to simulate")
    p.add_argument("--steps", type=int, help="simulation steps")
    p.add_argument("--alpha-start", type=float, dest="alpha_start")
    p.add_argument("--alpha-end", type=float, dest="alpha_end")
    p.add_argument("--grid-power", type=float, dest="grid_power", help="v_fid grid power")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_compute_rate)

    p = sub.add_parser("solve-schedule", help="solve a schedule from rate tables")
    p.add_argument("--rate", action="append", required=True, help="rate table file (repeatable)")
    p.add_argument("--weights", help="comma-separated weights, summing to 1")
    p.add_argument("--exponents", help="comma-separated exponents")
    p.add_argument("--alpha-max", type=float, default=1.0, dest="alpha_max")
    p.add_argument("--alpha-min", type=float, default=0.01, dest="alpha_min")
    p.add_argument("--knots", type=int, default=1001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve_schedule)

    p = sub.add_parser("sample", help="generate samples along a schedule")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schedule", required=True, help="zoo name, 'edm:smin,smax,rho', or schedule file")
    p.add_argument("--sampler", default="ddim:0", help="'ddim:<eta>' or 'dpmpp2m'")
    p.add_argument("--nfe", type=int, required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="error matrix over schedules and NFEs")
    p.add_argument("--config", help="JSON config; flags override its fields")
    p.add_argument("--dataset")
    p.add_argument("--schedules", help="comma-separated schedule names/paths")
    p.add_argument("--sampler")
    p.add_argument("--nfes", help="comma-separated NFE values")
    p.add_argument("--n-samples", type=int, dest="n_samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="two-stage weight/exponent tuning for a rate combination")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("toy-figure", help="diffused-density heatmap data on a 1-D dataset")
    p.add_argument("--dataset", default="toy3")
    p.add_argument("--alphas", default="0:0.999:50", help="alpha grid start:stop:count")
    p.add_argument("--xgrid", default="-5:5:2048", help="x grid start:stop:count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy_figure)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit code 1
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
