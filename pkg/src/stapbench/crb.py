"""Fisher information and Cramer-Rao bounds for azimuth and velocity.

The data model for one snapshot is circular complex Gaussian with mean
b(x) * s and known covariance R (the true clutter-plus-noise model, not a
sample estimate), where x is the parameter and s the coherent signal
amplitude. For such a mean-parameterized model the information is
2 * |s|^2 * Re[(db/dx)^H R^-1 (db/dx)] per snapshot; a Monte Carlo
squared-score estimator of the same quantity ships as the independent
cross-check. Azimuth information is reported per squared degree so bounds
read directly against errors in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import SceneConfig, TargetTruth
from .synth import CovarianceModel, principal_sqrt
from .steering import (space_time_steering, steering_derivative_theta,
                       steering_derivative_velocity)

RAD_PER_DEG = np.pi / 180.0


@dataclass(frozen=True)
class CrbReport:
    """Per-trial bound values; infinite entries flag a zero-information trial."""

    crb_theta_deg2: float
    crb_velocity_mps2: float
    fisher_theta: float       # per deg^2
    fisher_velocity: float    # per (m/s)^2
    scaling_mode: str         # "verbatim" (single snapshot) or "snapshot" (times K)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.crb_theta_deg2) and math.isfinite(self.crb_velocity_mps2)


def _information(amplitude: complex, d_steer: np.ndarray, total_cov: np.ndarray,
                 snapshots: int | None, scaling: str) -> float:
    if scaling not in ("verbatim", "snapshot"):
        raise ValueError(f"unknown scaling mode {scaling!r}")
    power = abs(amplitude) ** 2
    if power == 0.0:
        return 0.0
    try:
        solved = np.linalg.solve(total_cov, d_steer)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular covariance in Fisher information") from exc
    quad = float(np.real(np.vdot(d_steer, solved)))
    info = 2.0 * power * quad
    if scaling == "snapshot":
        if snapshots is None:
            raise ValueError("snapshot scaling requires the snapshot count")
        info *= snapshots
    return info


def fisher_theta(amplitude: complex, d_steer_theta: np.ndarray,
                 total_cov: np.ndarray, snapshots: int | None = None,
                 scaling: str = "verbatim") -> float:
    """Azimuth information [per deg^2]; zero amplitude carries zero information.

    ``d_steer_theta`` is the steering derivative per radian; the result is
    converted to per-degree^2 so the matching bound is in squared degrees.
    """
    info_rad = _information(amplitude, d_steer_theta, total_cov, snapshots, scaling)
    return info_rad * RAD_PER_DEG ** 2


def fisher_velocity(amplitude: complex, d_steer_vel: np.ndarray,
                    total_cov: np.ndarray, snapshots: int | None = None,
                    scaling: str = "verbatim") -> float:
    """Velocity information [per (m/s)^2]."""
    return _information(amplitude, d_steer_vel, total_cov, snapshots, scaling)


def crb_for_trial(cfg: SceneConfig, z: np.ndarray, model: CovarianceModel,
                  truth: TargetTruth, amplitude: complex,
                  scaling: str = "verbatim") -> CrbReport:
    """Bounds evaluated at one trial's truth with its calibrated amplitude.

    A zero-information parameter yields an infinite bound, reported as an
    explicit sentinel rather than raising.
    """
    theta_rad = np.deg2rad(truth.azimuth_deg)
    d_theta = steering_derivative_theta(cfg, z, theta_rad, cfg.elevation_rad,
                                        truth.velocity_mps)
    d_vel = steering_derivative_velocity(cfg, z, theta_rad, cfg.elevation_rad,
                                         truth.velocity_mps)
    info_t = fisher_theta(amplitude, d_theta, model.total, cfg.snapshots, scaling)
    info_v = fisher_velocity(amplitude, d_vel, model.total, cfg.snapshots, scaling)
    return CrbReport(
        crb_theta_deg2=(1.0 / info_t) if info_t > 0 else math.inf,
        crb_velocity_mps2=(1.0 / info_v) if info_v > 0 else math.inf,
        fisher_theta=info_t,
        fisher_velocity=info_v,
        scaling_mode=scaling,
    )


def crb_sweep_average(cfg: SceneConfig, z: np.ndarray, model: CovarianceModel,
                      trials: list[tuple[TargetTruth, complex]],
                      scaling: str = "verbatim") -> tuple[float, float, int]:
    """Arithmetic mean of per-trial bounds over a trial set.

    Returns (mean azimuth bound, mean velocity bound, excluded count);
    trials with an unbounded value are excluded from both means so the two
    averages cover the same population. Summation is the fixed-order
    pairwise reduction of the trial list, so the result does not depend on
    worker scheduling upstream.
    """
    if not trials:
        raise ValueError("empty trial set")
    theta_vals, vel_vals = [], []
    excluded = 0
    for truth, amplitude in trials:
        report = crb_for_trial(cfg, z, model, truth, amplitude, scaling)
        if not report.bounded:
            excluded += 1
            continue
        theta_vals.append(report.crb_theta_deg2)
        vel_vals.append(report.crb_velocity_mps2)
    if not theta_vals:
        return math.inf, math.inf, excluded
    return (float(np.mean(theta_vals)), float(np.mean(vel_vals)), excluded)


def fisher_monte_carlo_check(cfg: SceneConfig, z: np.ndarray, model: CovarianceModel,
                             truth: TargetTruth, amplitude: complex, n_mc: int,
                             rng: np.random.Generator, parameter: str = "theta",
                             fd_step: float | None = None) -> float:
    """Empirical mean squared score of the Gaussian log-likelihood.

    Draws ``n_mc`` snapshots from the model at the trial truth, evaluates
    the log-likelihood score by central finite differences in the chosen
    parameter, and averages the squared score. Serves as the independent
    oracle for the closed-form information; units match fisher_theta /
    fisher_velocity.
    """
    if parameter not in ("theta", "velocity"):
        raise ValueError(f"unknown parameter {parameter!r}")
    theta_rad = np.deg2rad(truth.azimuth_deg)

    def steer_at(x):
        if parameter == "theta":
            return space_time_steering(cfg, z, x, cfg.elevation_rad,
                                       truth.velocity_mps)
        return space_time_steering(cfg, z, theta_rad, cfg.elevation_rad, x)

    x0 = theta_rad if parameter == "theta" else truth.velocity_mps
    if fd_step is None:
        fd_step = 1e-5 if parameter == "theta" else 1e-4

    total = model.total
    root = principal_sqrt(total)
    dim = total.shape[0]
    w = (rng.standard_normal((dim, n_mc))
         + 1j * rng.standard_normal((dim, n_mc))) / np.sqrt(2.0)
    draws = np.outer(steer_at(x0) * amplitude, np.ones(n_mc)) + root @ w

    def log_lik(x):
        resid = draws - np.outer(steer_at(x) * amplitude, np.ones(n_mc))
        solved = np.linalg.solve(total, resid)
        return -np.real(np.einsum("ij,ij->j", resid.conj(), solved))

    score = (log_lik(x0 + fd_step) - log_lik(x0 - fd_step)) / (2.0 * fd_step)
    info = float(np.mean(score ** 2))
    if parameter == "theta":
        info *= RAD_PER_DEG ** 2
    return info
