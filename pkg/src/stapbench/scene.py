"""Scene geometry, radar parameters, processing-region grids, and target placement."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

# Nominal propagation speed [m/s]. Kept at 3e8 so the range-bin size
# c/(2B) is exactly 30 m for the default 5 MHz bandwidth and the default
# range span closes to an integer number of bins.
SPEED_OF_LIGHT = 3.0e8

# Step size used when a configuration wants the finer 0.5 m/s velocity
# grid (31 points over the default span) instead of the default 21-point
# grid. Selectable via config file or CLI override.
FINE_VELOCITY_STEP_MPS = 0.5


@dataclass(frozen=True)
class SceneConfig:
    """Every configurable physical and experimental parameter of a scene.

    Angles are stored in degrees (the unit used in configuration files and
    reports); steering math converts to radians at the call boundary.
    Instances are immutable and safe to share across concurrent workers.
    """

    carrier_freq_hz: float = 1.0e10      # f_c
    bandwidth_hz: float = 5.0e6          # B
    prf_hz: float = 1100.0               # pulse repetition frequency
    num_pulses: int = 4                  # pulses per return matrix
    num_channels: int = 16               # beamformed sub-arrays
    element_spacing_m: float = 0.015
    full_array_cols: int = 48            # horizontal elements
    full_array_rows: int = 5             # vertical elements
    platform_height_m: float = 1000.0
    range_lower_m: float = 14538.0
    range_upper_m: float = 14688.0
    azimuth_min_deg: float = 20.0
    azimuth_max_deg: float = 30.0
    velocity_min_mps: float = 175.0
    velocity_max_mps: float = 190.0
    azimuth_step_deg: float = 0.4
    velocity_step_mps: float = 0.75
    num_range_bins: int = 5
    elevation_rad: float = 0.0           # fixed broadside elevation
    cnr_db: float = 20.0                 # clutter-to-noise ratio
    rcs_mean: float = 10.0               # mean target cross section
    rcs_spread: float = 10.0             # full width of the RCS jitter
    snapshots: int = 300                 # independent returns per trial
    target_scnr_db: float = 20.0         # mean output SCNR to calibrate to
    rng_seed: int = 0

    def __post_init__(self):
        if self.carrier_freq_hz <= 0 or self.bandwidth_hz <= 0 or self.prf_hz <= 0:
            raise ValueError("carrier frequency, bandwidth, and PRF must be positive")
        if self.num_pulses < 1 or self.num_channels < 1:
            raise ValueError("num_pulses and num_channels must be >= 1")
        if self.snapshots < 1 or self.num_range_bins < 1:
            raise ValueError("snapshots and num_range_bins must be >= 1")
        if not self.azimuth_min_deg < self.azimuth_max_deg:
            raise ValueError("azimuth_min_deg must be below azimuth_max_deg")
        if not self.velocity_min_mps < self.velocity_max_mps:
            raise ValueError("velocity_min_mps must be below velocity_max_mps")
        if self.azimuth_step_deg <= 0 or self.velocity_step_mps <= 0:
            raise ValueError("grid step sizes must be positive")
        if self.full_array_cols % self.num_channels != 0:
            raise ValueError(
                f"full_array_cols ({self.full_array_cols}) must be divisible by "
                f"num_channels ({self.num_channels}) for sub-array beamforming"
            )
        span = self.range_upper_m - self.range_lower_m
        expected = self.num_range_bins * self.range_bin_m
        if abs(span - expected) > 1e-6 * max(abs(span), 1.0):
            raise ValueError(
                f"range span {span} m does not equal num_range_bins * c/(2B) "
                f"= {expected} m"
            )
        if self.rcs_spread < 0:
            raise ValueError("rcs_spread must be nonnegative")
        if self.rcs_mean - self.rcs_spread / 2 < 0:
            raise ValueError("rcs_mean - rcs_spread/2 must be nonnegative")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def range_bin_m(self) -> float:
        """Range-bin size c/(2B) [m]."""
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)

    @property
    def space_time_dim(self) -> int:
        """Length of a space-time vector: pulses times channels."""
        return self.num_pulses * self.num_channels

    @property
    def n_azimuth(self) -> int:
        return _grid_count(self.azimuth_min_deg, self.azimuth_max_deg, self.azimuth_step_deg)

    @property
    def n_velocity(self) -> int:
        return _grid_count(self.velocity_min_mps, self.velocity_max_mps, self.velocity_step_mps)

    def azimuth_grid_deg(self) -> np.ndarray:
        return self.azimuth_min_deg + self.azimuth_step_deg * np.arange(self.n_azimuth)

    def velocity_grid_mps(self) -> np.ndarray:
        return self.velocity_min_mps + self.velocity_step_mps * np.arange(self.n_velocity)


@dataclass(frozen=True)
class TargetTruth:
    """Ground truth for one randomly placed point target."""

    range_bin: int           # 0-based processing-region bin index
    azimuth_deg: float
    velocity_mps: float
    rcs: float


def _grid_count(lo: float, hi: float, step: float) -> int:
    # Small forward nudge so spans that are exact multiples of the step in
    # real arithmetic do not lose the endpoint to float rounding.
    return int(np.floor((hi - lo) / step + 1e-9)) + 1


def default_scene() -> SceneConfig:
    """The benchmark configuration: X-band, 4 pulses, 16 sub-arrays, 5 bins."""
    return SceneConfig()


def phase_centers(cfg: SceneConfig) -> np.ndarray:
    """Phase-center coordinates of the beamformed sub-arrays, shape (L, 3).

    The receive array is a uniform grid of full_array_cols x full_array_rows
    elements; each group of (full_array_cols / L) adjacent columns is
    beamformed into one channel. The returned rows are the centroids of
    those groups, laid out along the second coordinate axis and centered on
    the origin, so the first and third coordinates are identically zero.
    """
    if cfg.full_array_cols % cfg.num_channels != 0:
        raise ValueError("full_array_cols must be divisible by num_channels")
    group = cfg.full_array_cols // cfg.num_channels
    col_pos = (np.arange(cfg.full_array_cols) - (cfg.full_array_cols - 1) / 2.0)
    col_pos = col_pos * cfg.element_spacing_m
    centers = col_pos.reshape(cfg.num_channels, group).mean(axis=1)
    z = np.zeros((cfg.num_channels, 3))
    z[:, 1] = centers
    return z


def derive_rng(*key: int) -> np.random.Generator:
    """Deterministic random stream derived from a tuple of integers.

    The fixed derivation is ``np.random.default_rng(tuple(key))``; trials
    seeded as (master_seed, point_index, trial_index) are reproducible
    independent of worker scheduling.
    """
    return np.random.default_rng(tuple(int(k) for k in key))


def place_target(cfg: SceneConfig, rng: np.random.Generator) -> TargetTruth:
    """Draw one uniformly placed moving point target.

    Draw order is fixed (bin, azimuth, velocity, RCS) so a given stream
    always yields the same truth. The RCS is uniform on
    [rcs_mean - rcs_spread/2, rcs_mean + rcs_spread/2]; the amplitude
    calibration step turns it into a unit-mean power factor.
    """
    bin_idx = int(rng.integers(0, cfg.num_range_bins))
    azimuth = float(rng.uniform(cfg.azimuth_min_deg, cfg.azimuth_max_deg))
    velocity = float(rng.uniform(cfg.velocity_min_mps, cfg.velocity_max_mps))
    half = cfg.rcs_spread / 2.0
    rcs = float(rng.uniform(cfg.rcs_mean - half, cfg.rcs_mean + half))
    return TargetTruth(range_bin=bin_idx, azimuth_deg=azimuth,
                       velocity_mps=velocity, rcs=rcs)


def scene_config_from_dict(values: dict) -> SceneConfig:
    """Build a SceneConfig from a mapping with keys named exactly as the fields."""
    known = {f.name: f.type for f in fields(SceneConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    coerced = {}
    for f in fields(SceneConfig):
        if f.name not in values:
            continue
        raw = values[f.name]
        if f.type in ("int", int):
            coerced[f.name] = int(raw)
        else:
            coerced[f.name] = float(raw)
    return SceneConfig(**coerced)


def load_scene_config(path) -> SceneConfig:
    """Read a JSON configuration file whose keys match the SceneConfig fields."""
    with open(path, "r", encoding="utf-8") as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise ValueError(f"{path}: expected a JSON object of configuration keys")
    return scene_config_from_dict(values)
