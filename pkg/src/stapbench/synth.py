"""Synthetic clutter, noise, and target returns, with whitening and calibration.

Clutter is a zero-Doppler azimuth ridge: a sum of equal-power patches spread
over azimuth [-90, 90] degrees at zero velocity (the platform is stationary),
scaled so the clutter-to-noise trace ratio matches the configured CNR. Noise
is unit-power white. The resulting covariance is colored enough that
whitening is a real operation, yet always well conditioned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .scene import SceneConfig, TargetTruth
from .steering import array_steering, space_time_steering

log = logging.getLogger(__name__)

DEFAULT_CLUTTER_PATCHES = 181


@dataclass
class CovarianceModel:
    """Clutter and noise covariances of one scene, plus cached factors."""

    clutter_cov: np.ndarray
    noise_cov: np.ndarray
    cnr_db: float
    _clutter_sqrt: np.ndarray = field(repr=False, default=None)
    _noise_sqrt: np.ndarray = field(repr=False, default=None)

    @property
    def total(self) -> np.ndarray:
        """Clutter-plus-noise covariance."""
        return self.clutter_cov + self.noise_cov

    def clutter_sqrt(self) -> np.ndarray:
        if self._clutter_sqrt is None:
            self._clutter_sqrt = principal_sqrt(self.clutter_cov)
        return self._clutter_sqrt

    def noise_sqrt(self) -> np.ndarray:
        if self._noise_sqrt is None:
            self._noise_sqrt = principal_sqrt(self.noise_cov)
        return self._noise_sqrt


@dataclass
class TrialData:
    """One synthesized trial: target-bearing and reference data for every bin.

    ``y`` and ``z`` have shape (num_range_bins, dim, snapshots) and are
    mean centered over snapshots. ``signal`` is the 1 x K complex signal row
    injected in the true bin before centering; ``amplitude`` is its constant
    modulus and ``mean_amplitude`` the calibrated modulus at the mean RCS.
    ``signal_mean`` records the realized coherent snapshot mean, which the
    centering step removes from the stored data.
    """

    y: np.ndarray
    z: np.ndarray
    signal: np.ndarray
    truth: TargetTruth
    amplitude: float
    mean_amplitude: float
    signal_mean: complex


def _hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def principal_sqrt(mat: np.ndarray) -> np.ndarray:
    """Principal Hermitian square root via eigendecomposition.

    Tolerates tiny negative eigenvalues from rounding; genuinely indefinite
    input is an error.
    """
    vals, vecs = np.linalg.eigh(_hermitize(mat))
    floor = -1e-10 * max(vals.max(initial=0.0), 1.0)
    if vals.min(initial=0.0) < floor:
        raise ValueError("matrix is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    return _hermitize((vecs * np.sqrt(vals)) @ vecs.conj().T)


def inverse_sqrt(mat: np.ndarray) -> np.ndarray:
    """Inverse principal Hermitian square root. Input must be positive definite."""
    vals, vecs = np.linalg.eigh(_hermitize(mat))
    if vals.min() <= 0.0:
        raise ValueError("matrix is not positive definite; cannot whiten")
    return _hermitize((vecs / np.sqrt(vals)) @ vecs.conj().T)


def whiten(sigma: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Apply the inverse principal square root of ``sigma`` to a vector or matrix."""
    return inverse_sqrt(sigma) @ data


def build_covariance(cfg: SceneConfig, z: np.ndarray,
                     rng: np.random.Generator | None = None,
                     n_patches: int = DEFAULT_CLUTTER_PATCHES) -> CovarianceModel:
    """Construct the scene covariance model.

    Noise is the identity (unit power per element). Clutter is the sum of
    ``n_patches`` equal-power zero-Doppler patches spanning azimuth
    [-90, 90] degrees, plus a small diagonal load for conditioning, rescaled
    so trace(clutter)/trace(noise) equals the configured CNR exactly.
    ``rng`` is accepted for interface symmetry; the ridge is deterministic.
    """
    del rng
    dim = cfg.space_time_dim
    noise = np.eye(dim, dtype=complex)
    angles = np.linspace(-np.pi / 2, np.pi / 2, n_patches)
    patches = np.empty((dim, n_patches), dtype=complex)
    ones = np.ones(cfg.num_pulses, dtype=complex)
    for q, theta in enumerate(angles):
        patches[:, q] = np.kron(ones, array_steering(cfg, z, theta, 0.0))
    clutter = _hermitize(patches @ patches.conj().T)
    clutter += 1e-6 * (np.trace(clutter).real / dim) * np.eye(dim)
    cnr_lin = 10.0 ** (cfg.cnr_db / 10.0)
    clutter *= cnr_lin * np.trace(noise).real / np.trace(clutter).real
    return CovarianceModel(clutter_cov=clutter, noise_cov=noise, cnr_db=cfg.cnr_db)


def draw_clutter_noise(model: CovarianceModel, snapshots: int,
                       rng: np.random.Generator, which: str = "clutter") -> np.ndarray:
    """Draw i.i.d. circular complex Gaussian columns with the model covariance.

    Columns are the covariance square root times standard complex normal
    vectors (unit variance per complex entry).
    """
    if snapshots < 1:
        raise ValueError("snapshots must be >= 1")
    if which == "clutter":
        root = model.clutter_sqrt()
    elif which == "noise":
        root = model.noise_sqrt()
    else:
        raise ValueError(f"unknown draw kind {which!r}")
    dim = root.shape[0]
    w = (rng.standard_normal((dim, snapshots))
         + 1j * rng.standard_normal((dim, snapshots))) / np.sqrt(2.0)
    return root @ w


def calibrate_amplitude(cfg: SceneConfig, model: CovarianceModel,
                        steering: np.ndarray) -> float:
    """Signal modulus giving the configured mean output SCNR.

    The output SCNR of the whitened matched filter is
    amplitude^2 * a^H (clutter + noise)^-1 a; the returned modulus makes it
    equal 10^(target_scnr_db / 10).
    """
    try:
        solved = np.linalg.solve(model.total, steering)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is singular; cannot calibrate") from exc
    gain = float(np.real(np.vdot(steering, solved)))
    if gain <= 0:
        raise ValueError("covariance is not positive definite; cannot calibrate")
    target = 10.0 ** (cfg.target_scnr_db / 10.0)
    return float(np.sqrt(target / gain))


def synthesize_trial(cfg: SceneConfig, model: CovarianceModel, z: np.ndarray,
                     truth: TargetTruth, rng: np.random.Generator) -> TrialData:
    """Generate target-bearing and reference snapshot matrices for every bin.

    The true bin receives the rank-one signal a * S with S_j a constant
    modulus times an i.i.d. uniform phase; the modulus is the calibrated
    amplitude scaled by sqrt(rcs / rcs_mean), a unit-mean power factor, so
    the output SCNR averaged over trials matches the configured target.
    Every stored matrix is mean centered over snapshots. Draw order is
    fixed: signal phases, then per bin clutter, noise, reference clutter,
    reference noise.
    """
    K = cfg.snapshots
    if K < 2:
        raise ValueError("snapshots must be >= 2: mean centering would "
                         "annihilate a single-snapshot trial")
    steer = space_time_steering(cfg, z, np.deg2rad(truth.azimuth_deg),
                                cfg.elevation_rad, truth.velocity_mps)
    mean_amp = calibrate_amplitude(cfg, model, steer)
    amplitude = mean_amp * np.sqrt(truth.rcs / cfg.rcs_mean)
    phases = rng.uniform(0.0, 2.0 * np.pi, K)
    signal = amplitude * np.exp(1j * phases)

    dim = cfg.space_time_dim
    y = np.empty((cfg.num_range_bins, dim, K), dtype=complex)
    zmat = np.empty_like(y)
    for rho in range(cfg.num_range_bins):
        c = draw_clutter_noise(model, K, rng, "clutter")
        n = draw_clutter_noise(model, K, rng, "noise")
        y[rho] = c + n
        if rho == truth.range_bin:
            y[rho] += np.outer(steer, signal)
        c_ref = draw_clutter_noise(model, K, rng, "clutter")
        n_ref = draw_clutter_noise(model, K, rng, "noise")
        zmat[rho] = c_ref + n_ref
    y -= y.mean(axis=2, keepdims=True)
    zmat -= zmat.mean(axis=2, keepdims=True)
    return TrialData(y=y, z=zmat, signal=signal, truth=truth,
                     amplitude=float(amplitude), mean_amplitude=float(mean_amp),
                     signal_mean=complex(signal.mean()))


def estimate_covariance(z_mat: np.ndarray, loading_scale: float = 1e-6) -> np.ndarray:
    """Sample covariance Z Z^H / K of one reference matrix.

    When there are fewer snapshots than rows the estimate is rank deficient;
    a diagonal load of loading_scale * trace / dim is added so downstream
    whitening stays defined, and the amount is logged.
    """
    dim, snapshots = z_mat.shape
    sigma = _hermitize(z_mat @ z_mat.conj().T / snapshots)
    if snapshots < dim:
        load = loading_scale * np.trace(sigma).real / dim
        log.info("covariance estimate rank deficient (K=%d < dim=%d); "
                 "diagonal loading %.3e applied", snapshots, dim, load)
        sigma = sigma + load * np.eye(dim)
    return sigma
