"""Array, Doppler, and space-time steering vectors with analytic derivatives.

The space-time vector for a hypothesis (azimuth, elevation, velocity) is the
Kronecker product of the Doppler factor (length num_pulses, left) and the
array factor (length num_channels, right). All functions here are pure and
safe for unrestricted concurrent use.
"""

from __future__ import annotations

import numpy as np

from .scene import SPEED_OF_LIGHT, SceneConfig


def wavenumber(cfg: SceneConfig) -> float:
    """Carrier wavenumber 2*pi*f_c/c [rad/m]."""
    return 2.0 * np.pi * cfg.carrier_freq_hz / SPEED_OF_LIGHT


def doppler_frequency(cfg: SceneConfig, velocity_mps: float) -> float:
    """Two-way Doppler shift 2*v*f_c/c [Hz] for a closing velocity v."""
    return 2.0 * velocity_mps * cfg.carrier_freq_hz / SPEED_OF_LIGHT


def array_steering(cfg: SceneConfig, z: np.ndarray, theta_rad: float,
                   phi_rad: float) -> np.ndarray:
    """Array factor: entry m is exp(i*k*<z_m, u>) with u the look direction.

    u = [cos(phi)cos(theta), cos(phi)sin(theta), sin(phi)] and z the (L, 3)
    phase-center matrix.
    """
    u = np.array([
        np.cos(phi_rad) * np.cos(theta_rad),
        np.cos(phi_rad) * np.sin(theta_rad),
        np.sin(phi_rad),
    ])
    return np.exp(1j * wavenumber(cfg) * (z @ u))


def doppler_steering(cfg: SceneConfig, velocity_mps: float) -> np.ndarray:
    """Doppler factor: entry p (0-indexed) is exp(-i*2*pi*(f_dop/f_PR)*p).

    The negative-exponent convention is fixed here and used consistently by
    synthesis, detection, and bound calculations, which only ever consume
    magnitude-squared forms.
    """
    ratio = doppler_frequency(cfg, velocity_mps) / cfg.prf_hz
    return np.exp(-1j * 2.0 * np.pi * ratio * np.arange(cfg.num_pulses))


def space_time_steering(cfg: SceneConfig, z: np.ndarray, theta_rad: float,
                        phi_rad: float, velocity_mps: float) -> np.ndarray:
    """Space-time vector, length num_pulses * num_channels.

    Entry (p*L + m) equals the Doppler entry p times the array entry m.
    """
    return np.kron(doppler_steering(cfg, velocity_mps),
                   array_steering(cfg, z, theta_rad, phi_rad))


def steering_derivative_theta(cfg: SceneConfig, z: np.ndarray, theta_rad: float,
                              phi_rad: float, velocity_mps: float) -> np.ndarray:
    """Derivative of the space-time vector with respect to azimuth [per rad].

    Differentiating the array phase gives i*k*<z_m, g> per entry, with
    g = d u / d theta = [-cos(phi)sin(theta), cos(phi)cos(theta), 0].
    """
    g = np.array([
        -np.cos(phi_rad) * np.sin(theta_rad),
        np.cos(phi_rad) * np.cos(theta_rad),
        0.0,
    ])
    xi = array_steering(cfg, z, theta_rad, phi_rad)
    d_xi = 1j * wavenumber(cfg) * (z @ g) * xi
    return np.kron(doppler_steering(cfg, velocity_mps), d_xi)


def steering_derivative_velocity(cfg: SceneConfig, z: np.ndarray, theta_rad: float,
                                 phi_rad: float, velocity_mps: float) -> np.ndarray:
    """Derivative of the space-time vector with respect to velocity [per m/s].

    With pulse phases -2*pi*(f_dop/f_PR)*p and f_dop = 2*v*f_c/c, each
    Doppler entry picks up -i*(2*f_c/c)*h_p where h_p = 2*pi*p/f_PR.
    """
    h = 2.0 * np.pi * np.arange(cfg.num_pulses) / cfg.prf_hz
    psi = doppler_steering(cfg, velocity_mps)
    d_psi = -1j * (2.0 * cfg.carrier_freq_hz / SPEED_OF_LIGHT) * h * psi
    return np.kron(d_psi, array_steering(cfg, z, theta_rad, phi_rad))


def steering_grid(cfg: SceneConfig, z: np.ndarray) -> np.ndarray:
    """All processing-region steering vectors as one (dim, n_az * n_vel) matrix.

    Column j*n_vel + l holds the vector for azimuth index j and velocity
    index l, matching a C-order reshape of an (n_az, n_vel) heatmap plane.
    """
    az = np.deg2rad(cfg.azimuth_grid_deg())
    vel = cfg.velocity_grid_mps()
    xi = np.empty((cfg.num_channels, az.size), dtype=complex)
    for j, theta in enumerate(az):
        xi[:, j] = array_steering(cfg, z, theta, cfg.elevation_rad)
    psi = np.empty((cfg.num_pulses, vel.size), dtype=complex)
    for l, v in enumerate(vel):
        psi[:, l] = doppler_steering(cfg, v)
    # kron over the grid: out[p*L + m, j*n_vel + l] = psi[p, l] * xi[m, j]
    out = (psi[:, None, None, :] * xi[None, :, :, None])
    return out.reshape(cfg.space_time_dim, az.size * vel.size)
