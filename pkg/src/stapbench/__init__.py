"""Synthetic space-time radar trials, detection heatmaps, azimuth/velocity
estimators, and Cramer-Rao benchmarking."""

from .scene import (SPEED_OF_LIGHT, SceneConfig, TargetTruth, default_scene,
                    derive_rng, load_scene_config, phase_centers, place_target)
from .steering import (array_steering, doppler_steering, space_time_steering,
                       steering_derivative_theta, steering_derivative_velocity)
from .synth import (CovarianceModel, TrialData, build_covariance,
                    calibrate_amplitude, draw_clutter_noise, estimate_covariance,
                    inverse_sqrt, synthesize_trial, whiten)
from .heatmap import HeatmapTensor, build_heatmap, namf
from .estimators import (Estimate, GdConfig, gd_azimuth, gd_loss, gd_velocity,
                         ls_coefficients, peak_cell_midpoint)
from .crb import (CrbReport, crb_for_trial, crb_sweep_average, fisher_theta,
                  fisher_velocity, fisher_monte_carlo_check)
from .learned import (CnnModel, TrainConfig, bias_variance_decomposition,
                      load_model, predict, save_model, train)
from .bench import SweepReport, SweepSpec, emit_report, run_sweep

__version__ = "0.1.0"
