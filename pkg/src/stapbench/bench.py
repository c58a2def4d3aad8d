"""Sweep orchestration: trial generation, estimator evaluation, and reporting.

A sweep runs one of two evaluations: mean output SCNR swept at fixed
snapshot count, or snapshot count swept at fixed SCNR. Every sweep point
generates its own trial set, splits it 90/10 into training and test,
trains the regression network on the training split, and scores the
peak-cell, gradient-descent, and network estimators on the test split
against the averaged bounds.

Reproducibility contract: every trial's stream derives from
(master_seed, point_index, trial_index) via scene.derive_rng, so results
are byte-identical for any worker count; wall time is kept out of the CSV
for the same reason.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import crb as crb_mod
from . import learned
from .estimators import GdConfig, gd_azimuth, gd_velocity, peak_cell_midpoint
from .heatmap import HeatmapTensor, build_heatmap
from .scene import SceneConfig, derive_rng, phase_centers, place_target
from .steering import steering_grid
from .synth import build_covariance, estimate_covariance, inverse_sqrt, synthesize_trial

log = logging.getLogger(__name__)

METHODS = ("MP", "GD", "CNN")

DEFAULT_SCNR_VALUES_DB = tuple(float(v) for v in range(-20, 25, 5))
DEFAULT_SNAPSHOT_VALUES = tuple(range(75, 325, 25))


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep, what to hold fixed, and how many trials per point."""

    axis: str = "scnr"                                   # "scnr" or "snapshots"
    scnr_values_db: tuple = DEFAULT_SCNR_VALUES_DB
    snapshot_values: tuple = DEFAULT_SNAPSHOT_VALUES
    fixed_snapshots: int = 300                           # used by the SCNR sweep
    fixed_scnr_db: float = 20.0                          # used by the snapshot sweep
    n_trials: int = 2000
    master_seed: int = 0

    def __post_init__(self):
        if self.axis not in ("scnr", "snapshots"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        values = self.scnr_values_db if self.axis == "scnr" else self.snapshot_values
        if len(values) == 0 or any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("axis values must be strictly increasing and nonempty")
        if self.n_trials < 10:
            raise ValueError("need at least 10 trials per sweep point")

    @property
    def axis_values(self) -> tuple:
        return self.scnr_values_db if self.axis == "scnr" else self.snapshot_values


@dataclass(frozen=True)
class MethodErrors:
    """Test-split error summary for one estimator at one sweep point."""

    mse_theta: float
    mse_velocity: float
    bias2_theta: float
    var_theta: float
    bias2_velocity: float
    var_velocity: float


@dataclass
class SweepPoint:
    axis: str
    value: float
    methods: dict[str, MethodErrors]
    crb_theta_verbatim: float
    crb_theta_snapshot: float
    crb_velocity_verbatim: float
    crb_velocity_snapshot: float
    n_test: int
    excluded_trials: int
    wall_time_s: float


@dataclass
class SweepReport:
    spec: SweepSpec
    config: SceneConfig
    points: list[SweepPoint] = field(default_factory=list)


@dataclass
class TrialArtifacts:
    """What one generated trial contributes downstream."""

    truth: object
    amplitude: float
    tensor: np.ndarray
    y_white: np.ndarray | None = None    # whitened true-bin data, test trials only
    whitener: np.ndarray | None = None


_SCENE_CACHE: dict = {}


def _scene_parts(cfg: SceneConfig):
    """Phase centers, covariance model, and steering grid for a config.

    Cached on the geometry/CNR signature, which sweep points share.
    """
    key = replace(cfg, target_scnr_db=0.0, snapshots=2)
    parts = _SCENE_CACHE.get(key)
    if parts is None:
        z = phase_centers(cfg)
        model = build_covariance(cfg, z)
        grid = steering_grid(cfg, z)
        _SCENE_CACHE[key] = parts = (z, model, grid)
    return parts


def generate_trial(cfg: SceneConfig, master_seed: int, point_index: int,
                   trial_index: int, keep_data: bool) -> TrialArtifacts:
    """Run the full synthesis pipeline for one seeded trial."""
    z, model, grid = _scene_parts(cfg)
    rng = derive_rng(master_seed, point_index, trial_index)
    truth = place_target(cfg, rng)
    trial = synthesize_trial(cfg, model, z, truth, rng)
    covs = np.stack([estimate_covariance(trial.z[rho])
                     for rho in range(cfg.num_range_bins)])
    tensor = build_heatmap(cfg, covs, trial.y, grid=grid, truth=truth)
    out = TrialArtifacts(truth=truth, amplitude=trial.amplitude,
                         tensor=tensor.values)
    if keep_data:
        white = inverse_sqrt(covs[truth.range_bin])
        out.whitener = white
        out.y_white = white @ trial.y[truth.range_bin]
    return out


def _trial_task(args):
    cfg, master_seed, point_index, trial_index, keep_data = args
    return generate_trial(cfg, master_seed, point_index, trial_index, keep_data)


def _point_config(spec: SweepSpec, cfg: SceneConfig, value) -> SceneConfig:
    if spec.axis == "scnr":
        return replace(cfg, target_scnr_db=float(value), snapshots=spec.fixed_snapshots)
    return replace(cfg, snapshots=int(value), target_scnr_db=spec.fixed_scnr_db)


def _mse(errors: np.ndarray) -> float:
    return float(np.mean(np.square(errors)))


def _method_errors(pairs: list[tuple[float, float]], truths) -> MethodErrors:
    split = learned.bias_variance_decomposition(pairs, truths)
    theta_err = np.array([p[0] - t.azimuth_deg for p, t in zip(pairs, truths)])
    vel_err = np.array([p[1] - t.velocity_mps for p, t in zip(pairs, truths)])
    return MethodErrors(
        mse_theta=_mse(theta_err), mse_velocity=_mse(vel_err),
        bias2_theta=split.bias2_theta, var_theta=split.var_theta,
        bias2_velocity=split.bias2_velocity, var_velocity=split.var_velocity,
    )


def _train_seed(master_seed: int, point_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, point_index, 0xC1]).generate_state(1)[0])


def run_sweep(spec: SweepSpec, cfg: SceneConfig, gd: GdConfig | None = None,
              train_cfg: learned.TrainConfig | None = None,
              workers: int = 1) -> SweepReport:
    """Run every sweep point end to end and collect the report."""
    gd = gd or GdConfig()
    train_cfg = train_cfg or learned.TrainConfig()
    report = SweepReport(spec=spec, config=cfg)
    n_train = int(round(0.9 * spec.n_trials))
    n_test = spec.n_trials - n_train
    if n_test < 1:
        raise ValueError("trial count leaves an empty test split")

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for point_index, value in enumerate(spec.axis_values):
            started = time.perf_counter()
            point_cfg = _point_config(spec, cfg, value)
            z, model, grid = _scene_parts(point_cfg)

            tasks = [(point_cfg, spec.master_seed, point_index, i, i >= n_train)
                     for i in range(spec.n_trials)]
            if pool is None:
                trials = [_trial_task(t) for t in tasks]
            else:
                trials = list(pool.map(_trial_task, tasks, chunksize=8))

            train_split = [(t.tensor, t.truth) for t in trials[:n_train]]
            seed = _train_seed(spec.master_seed, point_index)
            model_cnn, _ = learned.train(
                train_split, replace(train_cfg, seed=seed), point_cfg)

            point = _evaluate_point(spec, point_cfg, value, trials[n_train:],
                                    z, model, model_cnn, gd)
            point.wall_time_s = time.perf_counter() - started
            report.points.append(point)
            log.info("sweep %s=%s done in %.1f s (excluded %d)", spec.axis,
                     value, point.wall_time_s, point.excluded_trials)
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def _evaluate_point(spec, point_cfg, value, test_trials, z, model, model_cnn,
                    gd) -> SweepPoint:
    az_grid = point_cfg.azimuth_grid_deg()
    vel_grid = point_cfg.velocity_grid_mps()

    truths = []
    mp_pairs, gd_pairs, cnn_pairs = [], [], []
    crb_tv, crb_ts, crb_vv, crb_vs = [], [], [], []
    excluded = 0
    for art in test_trials:
        tensor = HeatmapTensor(values=art.tensor, azimuth_deg=az_grid,
                               velocity_mps=vel_grid, truth=art.truth)
        try:
            mp = peak_cell_midpoint(tensor)
            gd_t = gd_azimuth(point_cfg, z, art.y_white, mp.azimuth_deg,
                              art.truth.velocity_mps, gd, whitener=art.whitener)
            gd_v = gd_velocity(point_cfg, z, art.y_white, art.truth.azimuth_deg,
                               mp.velocity_mps, gd, whitener=art.whitener)
            verbatim = crb_mod.crb_for_trial(point_cfg, z, model, art.truth,
                                             art.amplitude, "verbatim")
            scaled = crb_mod.crb_for_trial(point_cfg, z, model, art.truth,
                                           art.amplitude, "snapshot")
        except (ValueError, RuntimeError) as exc:
            log.warning("excluding test trial: %s", exc)
            excluded += 1
            continue
        if not (verbatim.bounded and scaled.bounded):
            excluded += 1
            continue
        truths.append(art.truth)
        mp_pairs.append((mp.azimuth_deg, mp.velocity_mps))
        gd_pairs.append((gd_t.azimuth_deg, gd_v.velocity_mps))
        cnn_pairs.append(learned.predict(model_cnn, art.tensor))
        crb_tv.append(verbatim.crb_theta_deg2)
        crb_ts.append(scaled.crb_theta_deg2)
        crb_vv.append(verbatim.crb_velocity_mps2)
        crb_vs.append(scaled.crb_velocity_mps2)

    if not truths:
        raise RuntimeError(f"every test trial excluded at sweep point {value}")
    methods = {
        "MP": _method_errors(mp_pairs, truths),
        "GD": _method_errors(gd_pairs, truths),
        "CNN": _method_errors(cnn_pairs, truths),
    }
    return SweepPoint(
        axis=spec.axis, value=float(value), methods=methods,
        crb_theta_verbatim=float(np.mean(crb_tv)),
        crb_theta_snapshot=float(np.mean(crb_ts)),
        crb_velocity_verbatim=float(np.mean(crb_vv)),
        crb_velocity_snapshot=float(np.mean(crb_vs)),
        n_test=len(truths), excluded_trials=excluded, wall_time_s=0.0,
    )


# ---------------------------------------------------------------------------
# reporting

CSV_COLUMNS = (
    "axis", "value", "method", "n_test", "excluded_trials",
    "mse_theta_deg2", "mse_theta_db", "bias2_theta_deg2", "var_theta_deg2",
    "mse_vel_mps2", "mse_vel_db", "bias2_vel_mps2", "var_vel_mps2",
    "crb_theta_verbatim_deg2", "crb_theta_snapshot_deg2",
    "crb_vel_verbatim_mps2", "crb_vel_snapshot_mps2",
)


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def _fmt(x) -> str:
    return repr(float(x))


def report_rows(report: SweepReport):
    """Long-form rows, one per (sweep point, method)."""
    for point in report.points:
        for method in METHODS:
            err = point.methods[method]
            yield {
                "axis": point.axis,
                "value": _fmt(point.value),
                "method": method,
                "n_test": str(point.n_test),
                "excluded_trials": str(point.excluded_trials),
                "mse_theta_deg2": _fmt(err.mse_theta),
                "mse_theta_db": _fmt(_db(err.mse_theta)),
                "bias2_theta_deg2": _fmt(err.bias2_theta),
                "var_theta_deg2": _fmt(err.var_theta),
                "mse_vel_mps2": _fmt(err.mse_velocity),
                "mse_vel_db": _fmt(_db(err.mse_velocity)),
                "bias2_vel_mps2": _fmt(err.bias2_velocity),
                "var_vel_mps2": _fmt(err.var_velocity),
                "crb_theta_verbatim_deg2": _fmt(point.crb_theta_verbatim),
                "crb_theta_snapshot_deg2": _fmt(point.crb_theta_snapshot),
                "crb_vel_verbatim_mps2": _fmt(point.crb_velocity_verbatim),
                "crb_vel_snapshot_mps2": _fmt(point.crb_velocity_snapshot),
            }


def write_report_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in report_rows(report):
            writer.writerow(row)


def read_report_csv(path) -> list[dict]:
    """Parse a report CSV back into typed rows (floats where numeric)."""
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in CSV_COLUMNS:
                if key in ("axis", "method"):
                    continue
                row[key] = int(row[key]) if key in ("n_test", "excluded_trials") \
                    else float(row[key])
            rows.append(row)
    return rows


def emit_report(report: SweepReport, out_dir) -> dict:
    """Write the CSV and one log-scaled comparison plot per parameter.

    Returns a mapping of artifact names to paths. An empty report writes a
    header-only CSV, warns, and skips the plots.
    """
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv"}
    write_report_csv(report, paths["csv"])
    if not report.points:
        warnings.warn("empty sweep report: wrote header-only CSV, no plots")
        return paths

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.fonttype"] = "none"   # keep text searchable in the SVG

    values = [p.value for p in report.points]
    xlabel = ("mean output SCNR [dB]" if report.spec.axis == "scnr"
              else "snapshots per trial")
    specs = [
        ("azimuth", "MSE [deg^2]", lambda e: e.mse_theta,
         lambda p: (p.crb_theta_verbatim, p.crb_theta_snapshot)),
        ("velocity", "MSE [(m/s)^2]", lambda e: e.mse_velocity,
         lambda p: (p.crb_velocity_verbatim, p.crb_velocity_snapshot)),
    ]
    for name, ylabel, err_of, crb_of in specs:
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for method, marker in zip(METHODS, ("o", "s", "^")):
            ax.plot(values, [err_of(p.methods[method]) for p in report.points],
                    marker=marker, label=method)
        ax.plot(values, [crb_of(p)[0] for p in report.points],
                color="k", linestyle="-", label="CRB")
        ax.plot(values, [crb_of(p)[1] for p in report.points],
                color="k", linestyle="--", label="CRB (snapshot-scaled)")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = out / f"mse_{name}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths[name] = path
    return paths
