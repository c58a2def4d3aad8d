"""Peak-cell-midpoint readout and gradient-descent refinement of one parameter.

The gradient-descent estimators alternate two steps on the whitened data of
the true range bin: a least-squares refit of the per-snapshot signal
coefficients for the current steering hypothesis, and one descent step on
the mean squared reconstruction error. Azimuth is refined with the true
velocity held fixed, velocity with the true azimuth held fixed, and the
iterate is clamped to the processing region after every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .heatmap import HeatmapTensor
from .scene import SceneConfig
from .steering import (space_time_steering, steering_derivative_theta,
                       steering_derivative_velocity)

DEG_PER_RAD = 180.0 / np.pi


@dataclass(frozen=True)
class Estimate:
    """One estimator output for a single trial."""

    azimuth_deg: float
    velocity_mps: float
    method: str                      # "MP", "GD", or "CNN"
    iterations_used: int = 0
    final_loss: float | None = None  # gradient descent only


@dataclass(frozen=True)
class GdConfig:
    """Gradient-descent hyperparameters; defaults follow the benchmark setup."""

    learning_rate_az: float = 1e-5
    learning_rate_vel: float = 1e-2
    iters_az: int = 100
    iters_vel: int = 150
    gradient_mode: str = "analytic"   # "analytic" or "finite-difference"
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.learning_rate_az < 0 or self.learning_rate_vel < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.iters_az < 1 or self.iters_vel < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.gradient_mode not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")


def peak_cell_midpoint(tensor: HeatmapTensor) -> Estimate:
    """Grid coordinates of the dominant heatmap cell.

    Ties break to the lowest flat (C-order) index, so the result is
    deterministic across runs.
    """
    if tensor.values.size == 0:
        raise ValueError("empty heatmap tensor")
    if not np.any(tensor.values):
        raise ValueError("all-zero heatmap tensor has no dominant cell")
    _, j, l = tensor.argmax_cell()
    return Estimate(azimuth_deg=float(tensor.azimuth_deg[j]),
                    velocity_mps=float(tensor.velocity_mps[l]),
                    method="MP")


def ls_coefficients(steer_w: np.ndarray, y_w: np.ndarray) -> np.ndarray:
    """Least-squares signal coefficients c = (a^H Y) / (a^H a), length K.

    The rank-one model reconstruction is the outer product of the steering
    vector with this row.
    """
    energy = float(np.real(np.vdot(steer_w, steer_w)))
    if energy == 0.0:
        raise ValueError("zero steering vector")
    return (steer_w.conj() @ y_w) / energy


def gd_loss(steer_w: np.ndarray, y_w: np.ndarray) -> float:
    """Mean squared modulus of the rank-one reconstruction residual.

    Averages |Y_ij - (a c)_ij|^2 over all rows and snapshots, with c the
    least-squares coefficients for the given steering vector.
    """
    coeff = ls_coefficients(steer_w, y_w)
    residual = y_w - np.outer(steer_w, coeff)
    return float(np.real(np.einsum("ij,ij->", residual.conj(), residual))
                 / residual.size)


def _analytic_gradient(steer: np.ndarray, d_steer: np.ndarray,
                       y_w: np.ndarray) -> float:
    # L = (||Y||_F^2 - N/D) / size with N = ||a^H Y||^2 and D = a^H a;
    # only the projection term depends on the parameter.
    proj = steer.conj() @ y_w
    d_proj = d_steer.conj() @ y_w
    num = float(np.real(np.vdot(proj, proj)))
    d_num = 2.0 * float(np.real(np.vdot(proj, d_proj)))
    den = float(np.real(np.vdot(steer, steer)))
    d_den = 2.0 * float(np.real(np.vdot(steer, d_steer)))
    return -(d_num * den - num * d_den) / den ** 2 / y_w.size


def _descend(y_w, steer_fn, deriv_fn, start, lo, hi, rate, iters, mode, fd_step):
    x = float(np.clip(start, lo, hi))
    for it in range(iters):
        steer = steer_fn(x)
        loss = gd_loss(steer, y_w)
        if mode == "analytic":
            grad = _analytic_gradient(steer, deriv_fn(x), y_w)
        else:
            grad = (gd_loss(steer_fn(x + fd_step), y_w)
                    - gd_loss(steer_fn(x - fd_step), y_w)) / (2.0 * fd_step)
        if not (np.isfinite(loss) and np.isfinite(grad)):
            raise RuntimeError(f"non-finite loss or gradient at iteration {it}")
        x = float(np.clip(x - rate * grad, lo, hi))
    return x, iters, gd_loss(steer_fn(x), y_w)


def gd_azimuth(cfg: SceneConfig, z: np.ndarray, y_w: np.ndarray,
               theta_init_deg: float, velocity_true_mps: float,
               gd: GdConfig = GdConfig(),
               whitener: np.ndarray | None = None) -> Estimate:
    """Refine the azimuth estimate on the true bin's whitened data.

    ``y_w`` must already be whitened; pass the same whitening matrix so the
    steering hypotheses live in the same space. The learning rate applies
    to azimuth in degrees. The true velocity is known and held fixed.
    """
    def steer(theta_deg):
        a = space_time_steering(cfg, z, np.deg2rad(theta_deg),
                                cfg.elevation_rad, velocity_true_mps)
        return a if whitener is None else whitener @ a

    def deriv(theta_deg):
        d = steering_derivative_theta(cfg, z, np.deg2rad(theta_deg),
                                      cfg.elevation_rad, velocity_true_mps)
        d = d if whitener is None else whitener @ d
        return d / DEG_PER_RAD   # per-degree slope

    theta, iters, loss = _descend(
        y_w, steer, deriv, theta_init_deg,
        cfg.azimuth_min_deg, cfg.azimuth_max_deg,
        gd.learning_rate_az, gd.iters_az, gd.gradient_mode, gd.fd_step)
    return Estimate(azimuth_deg=theta, velocity_mps=float(velocity_true_mps),
                    method="GD", iterations_used=iters, final_loss=loss)


def gd_velocity(cfg: SceneConfig, z: np.ndarray, y_w: np.ndarray,
                theta_true_deg: float, velocity_init_mps: float,
                gd: GdConfig = GdConfig(),
                whitener: np.ndarray | None = None) -> Estimate:
    """Mirror of gd_azimuth for the velocity parameter (true azimuth known)."""
    theta_rad = np.deg2rad(theta_true_deg)

    def steer(v):
        a = space_time_steering(cfg, z, theta_rad, cfg.elevation_rad, v)
        return a if whitener is None else whitener @ a

    def deriv(v):
        d = steering_derivative_velocity(cfg, z, theta_rad, cfg.elevation_rad, v)
        return d if whitener is None else whitener @ d

    vel, iters, loss = _descend(
        y_w, steer, deriv, velocity_init_mps,
        cfg.velocity_min_mps, cfg.velocity_max_mps,
        gd.learning_rate_vel, gd.iters_vel, gd.gradient_mode, gd.fd_step)
    return Estimate(azimuth_deg=float(theta_true_deg), velocity_mps=vel,
                    method="GD", iterations_used=iters, final_loss=loss)
