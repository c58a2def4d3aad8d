"""NAMF detection statistic and azimuth-velocity heatmap tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import SceneConfig, TargetTruth
from .steering import steering_grid
from .synth import inverse_sqrt


@dataclass
class HeatmapTensor:
    """Detection statistic over (range bin, azimuth, velocity) with its grids."""

    values: np.ndarray        # (num_range_bins, n_azimuth, n_velocity), >= 0
    azimuth_deg: np.ndarray
    velocity_mps: np.ndarray
    truth: TargetTruth | None = None

    def argmax_cell(self) -> tuple[int, int, int]:
        """Indices of the global peak; ties resolve to the lowest flat index."""
        flat = int(np.argmax(self.values))
        return np.unravel_index(flat, self.values.shape)

    def csv_rows(self):
        """Yield (range_bin, azimuth_deg, velocity_mps, gamma) rows."""
        for rho in range(self.values.shape[0]):
            for j, theta in enumerate(self.azimuth_deg):
                for l, v in enumerate(self.velocity_mps):
                    yield rho, float(theta), float(v), float(self.values[rho, j, l])


def namf(steer_w: np.ndarray, y_w: np.ndarray) -> float:
    """Normalized adaptive matched filter statistic for one whitened pair.

    With column energies d_j = ||y_j||^2, the statistic is
        ||a^H Y||^2 / ((a^H a) * ||d||_2)
    where a is the whitened steering vector and Y the whitened data.
    """
    steer_energy = float(np.real(np.vdot(steer_w, steer_w)))
    if steer_energy == 0.0:
        raise ValueError("degenerate input: zero steering vector")
    col_energy = np.real(np.einsum("ij,ij->j", y_w.conj(), y_w))
    denom = float(np.linalg.norm(col_energy))
    if denom == 0.0:
        raise ValueError("degenerate input: zero data matrix")
    proj = steer_w.conj() @ y_w
    num = float(np.real(np.vdot(proj, proj)))
    return num / (steer_energy * denom)


def build_heatmap(cfg: SceneConfig, sample_covs: np.ndarray, y: np.ndarray,
                  z: np.ndarray | None = None, grid: np.ndarray | None = None,
                  truth: TargetTruth | None = None) -> HeatmapTensor:
    """Sweep the statistic over the full (azimuth, velocity) grid per bin.

    ``sample_covs`` holds one estimated covariance per bin and ``y`` the
    matching data matrices. Each bin is whitened once with its own inverse
    square root; the steering grid is re-whitened per bin. Pass a
    precomputed ``grid`` (from steering_grid) to amortize it across trials.
    """
    if grid is None:
        if z is None:
            raise ValueError("either a phase-center matrix or a steering grid is required")
        grid = steering_grid(cfg, z)
    n_az, n_vel = cfg.n_azimuth, cfg.n_velocity
    values = np.empty((cfg.num_range_bins, n_az, n_vel))
    for rho in range(cfg.num_range_bins):
        try:
            white = inverse_sqrt(sample_covs[rho])
        except ValueError as exc:
            raise ValueError(f"range bin {rho}: {exc}") from exc
        y_w = white @ y[rho]
        grid_w = white @ grid
        col_energy = np.real(np.einsum("ij,ij->j", y_w.conj(), y_w))
        denom = float(np.linalg.norm(col_energy))
        if denom == 0.0:
            raise ValueError(f"range bin {rho}: degenerate input: zero data matrix")
        steer_energy = np.real(np.einsum("ij,ij->j", grid_w.conj(), grid_w))
        if np.any(steer_energy == 0.0):
            cell = int(np.argmin(steer_energy))
            raise ValueError(
                f"range bin {rho}, grid cell ({cell // n_vel}, {cell % n_vel}): "
                "degenerate input: zero steering vector")
        proj = grid_w.conj().T @ y_w
        num = np.real(np.einsum("ij,ij->i", proj.conj(), proj))
        values[rho] = (num / (steer_energy * denom)).reshape(n_az, n_vel)
    return HeatmapTensor(values=values, azimuth_deg=cfg.azimuth_grid_deg(),
                         velocity_mps=cfg.velocity_grid_mps(), truth=truth)
