"""Command-line entry points.

Subcommands cover the pipeline stages individually (simulate, heatmap,
estimate, crb, train) and end to end (sweep). Configuration comes from an
optional JSON file whose keys match the SceneConfig fields; individual
fields can be overridden on the command line with repeated
``--override key=value`` flags, which take precedence over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, crb as crb_mod, learned
from .container import read_array, write_array
from .estimators import GdConfig, gd_azimuth, gd_velocity, peak_cell_midpoint
from .heatmap import build_heatmap
from .scene import (SceneConfig, default_scene, derive_rng, load_scene_config,
                    phase_centers, place_target, scene_config_from_dict)
from .synth import build_covariance, estimate_covariance, inverse_sqrt, synthesize_trial

MANIFEST_NAME = "trials.json"


def _load_config(args) -> SceneConfig:
    cfg = load_scene_config(args.config) if args.config else default_scene()
    overrides = {}
    for item in args.override or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--override expects key=value, got {item!r}")
        overrides[key] = value
    if overrides:
        merged = asdict(cfg)
        merged.update(overrides)
        cfg = scene_config_from_dict(merged)
    return cfg


def _add_common(parser):
    parser.add_argument("--config", help="JSON scene configuration file")
    parser.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override one configuration field (repeatable)")
    parser.add_argument("--seed", type=int, default=0, help="master seed")


def _gd_config(args) -> GdConfig:
    mode = "analytic" if args.gradient == "analytic" else "finite-difference"
    return GdConfig(gradient_mode=mode)


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    z = phase_centers(cfg)
    model = build_covariance(cfg, z)
    manifest = {"config": asdict(cfg), "master_seed": args.seed, "trials": []}
    for i in range(args.trials):
        rng = derive_rng(args.seed, 0, i)
        truth = place_target(cfg, rng)
        trial = synthesize_trial(cfg, model, z, truth, rng)
        name = f"trial_{i:05d}.stap"
        write_array(out / name, np.stack([trial.y, trial.z]))
        manifest["trials"].append({
            "index": i, "file": name,
            "range_bin": truth.range_bin,
            "azimuth_deg": truth.azimuth_deg,
            "velocity_mps": truth.velocity_mps,
            "rcs": truth.rcs,
            "amplitude": trial.amplitude,
            "mean_amplitude": trial.mean_amplitude,
        })
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    print(f"wrote {args.trials} trials to {out}")
    return 0


def _read_manifest(path: Path):
    with open(path / MANIFEST_NAME, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = scene_config_from_dict(manifest["config"])
    return cfg, manifest


def _truth_of(entry):
    from .scene import TargetTruth
    return TargetTruth(range_bin=entry["range_bin"],
                       azimuth_deg=entry["azimuth_deg"],
                       velocity_mps=entry["velocity_mps"],
                       rcs=entry["rcs"])


def _trial_tensor(cfg, z, entry, in_dir: Path):
    stacked = read_array(in_dir / entry["file"])
    y, z_mat = stacked[0], stacked[1]
    covs = np.stack([estimate_covariance(z_mat[rho])
                     for rho in range(cfg.num_range_bins)])
    tensor = build_heatmap(cfg, covs, y, z=z, truth=_truth_of(entry))
    return tensor, y, covs


# ---------------------------------------------------------------------------
# heatmap

def cmd_heatmap(args) -> int:
    in_dir = Path(args.input)
    cfg, manifest = _read_manifest(in_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    z = phase_centers(cfg)
    for entry in manifest["trials"]:
        tensor, _, _ = _trial_tensor(cfg, z, entry, in_dir)
        stem = f"heatmap_{entry['index']:05d}"
        write_array(out / f"{stem}.stap", tensor.values)
        if args.csv:
            with open(out / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["range_bin", "azimuth_deg", "velocity_mps", "gamma"])
                for row in tensor.csv_rows():
                    writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    print(f"wrote {len(manifest['trials'])} heatmap tensors to {out}")
    return 0


# ---------------------------------------------------------------------------
# estimate

def cmd_estimate(args) -> int:
    in_dir = Path(args.input)
    cfg, manifest = _read_manifest(in_dir)
    z = phase_centers(cfg)
    gd = _gd_config(args)
    model_cnn = learned.load_model(args.model) if args.model else None
    rows = []
    for entry in manifest["trials"]:
        tensor, y, covs = _trial_tensor(cfg, z, entry, in_dir)
        truth = _truth_of(entry)
        mp = peak_cell_midpoint(tensor)
        white = inverse_sqrt(covs[truth.range_bin])
        y_w = white @ y[truth.range_bin]
        gd_t = gd_azimuth(cfg, z, y_w, mp.azimuth_deg, truth.velocity_mps,
                          gd, whitener=white)
        gd_v = gd_velocity(cfg, z, y_w, truth.azimuth_deg, mp.velocity_mps,
                           gd, whitener=white)
        rows.append((entry["index"], "MP", mp.azimuth_deg, mp.velocity_mps, 0, ""))
        rows.append((entry["index"], "GD", gd_t.azimuth_deg, gd_v.velocity_mps,
                     gd_t.iterations_used + gd_v.iterations_used,
                     repr((gd_t.final_loss + gd_v.final_loss) / 2.0)))
        if model_cnn is not None:
            theta, vel = learned.predict(model_cnn, tensor)
            rows.append((entry["index"], "CNN", theta, vel, 0, ""))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "method", "theta_hat", "v_hat",
                         "iterations", "final_loss"])
        for trial_id, method, theta, vel, iters, loss in rows:
            writer.writerow([trial_id, method, repr(float(theta)),
                             repr(float(vel)), iters, loss])
    print(f"wrote {len(rows)} estimate rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# crb

def cmd_crb(args) -> int:
    in_dir = Path(args.input)
    cfg, manifest = _read_manifest(in_dir)
    z = phase_centers(cfg)
    model = build_covariance(cfg, z)
    trials = [(_truth_of(e), e["amplitude"]) for e in manifest["trials"]]
    modes = [args.crb_scaling] if args.crb_scaling else ["verbatim", "snapshot"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep_axis", "sweep_value", "crb_theta_deg2",
                         "crb_vel_mps2", "scaling_mode", "excluded_trials"])
        for mode in modes:
            crb_t, crb_v, excluded = crb_mod.crb_sweep_average(
                cfg, z, model, trials, scaling=mode)
            writer.writerow(["scnr", repr(cfg.target_scnr_db), repr(crb_t),
                             repr(crb_v), mode, excluded])
    print(f"wrote CRB averages to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    in_dir = Path(args.input)
    cfg, manifest = _read_manifest(in_dir)
    z = phase_centers(cfg)
    dataset = []
    for entry in manifest["trials"]:
        tensor, _, _ = _trial_tensor(cfg, z, entry, in_dir)
        dataset.append((tensor, _truth_of(entry)))
    train_cfg = learned.TrainConfig(seed=args.seed, epochs=args.epochs)
    model, history = learned.train(dataset, train_cfg, cfg)
    learned.save_model(model, args.out)
    log_path = Path(args.out).with_suffix(".log.csv")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss, val_loss in history:
            writer.writerow([epoch, repr(train_loss), repr(val_loss)])
    print(f"trained {model.parameter_count}-parameter model -> {args.out} "
          f"({len(history)} epochs, log at {log_path})")
    return 0


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    n_trials = 10000 if args.full_scale else args.trials
    kwargs = {}
    if args.scnr_values:
        kwargs["scnr_values_db"] = tuple(float(v) for v in args.scnr_values.split(","))
    if args.snapshot_values:
        kwargs["snapshot_values"] = tuple(int(v) for v in args.snapshot_values.split(","))
    spec = bench.SweepSpec(axis=args.axis, n_trials=n_trials,
                           master_seed=args.seed, **kwargs)
    report = bench.run_sweep(spec, cfg, gd=_gd_config(args), workers=args.workers)
    paths = bench.emit_report(report, args.out)
    scaling = args.crb_scaling or "verbatim"
    for point in report.points:
        crb_t = (point.crb_theta_verbatim if scaling == "verbatim"
                 else point.crb_theta_snapshot)
        print(f"{spec.axis}={point.value:g}: "
              + " ".join(f"MSE_theta[{m}]={point.methods[m].mse_theta:.3e}"
                         for m in bench.METHODS)
              + f" CRB_theta[{scaling}]={crb_t:.3e}")
    print("artifacts: " + ", ".join(str(p) for p in paths.values()))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stapbench",
        description="Synthetic space-time radar trials, estimators, and bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate trial dataset files")
    _add_common(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("heatmap", help="compute heatmap tensors for stored trials")
    p.add_argument("--in", dest="input", required=True, help="simulate output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", action="store_true", help="also write per-cell CSV files")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("estimate", help="run estimators on stored trials")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--gradient", choices=["analytic", "fd"], default="analytic")
    p.add_argument("--model", help="checkpoint for network estimates")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crb", help="average bounds over stored trial truths")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--crb-scaling", choices=["verbatim", "snapshot"])
    p.set_defaults(func=cmd_crb)

    p = sub.add_parser("train", help="train the regression network on stored trials")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a full evaluation sweep")
    _add_common(p)
    p.add_argument("--axis", choices=["scnr", "snapshots"], default="scnr")
    p.add_argument("--trials", type=int, default=2000, help="trials per sweep point")
    p.add_argument("--full-scale", action="store_true",
                   help="use 10000 trials per point")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--gradient", choices=["analytic", "fd"], default="analytic")
    p.add_argument("--crb-scaling", choices=["verbatim", "snapshot"])
    p.add_argument("--scnr-values", help="comma-separated SCNR axis override [dB]")
    p.add_argument("--snapshot-values", help="comma-separated snapshot axis override")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
