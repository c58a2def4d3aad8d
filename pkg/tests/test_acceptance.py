"""Acceptance gate: one test per exit criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete. The desk-scale evaluation point (criteria 7 and 8)
and the reproducibility sweep (criterion 9) dominate the runtime.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from stapbench import bench, learned
from stapbench.crb import crb_for_trial, crb_sweep_average, fisher_monte_carlo_check
from stapbench.estimators import GdConfig, gd_azimuth, gd_loss, gd_velocity
from stapbench.heatmap import namf
from stapbench.scene import (default_scene, derive_rng, phase_centers,
                             place_target)
from stapbench.steering import (space_time_steering, steering_derivative_theta,
                                steering_derivative_velocity)
from stapbench.synth import (build_covariance, calibrate_amplitude,
                             draw_clutter_noise, whiten)

CFG = default_scene()
Z = phase_centers(CFG)
MODEL = build_covariance(CFG, Z)


def _report(number: int, ok: bool, detail: str):
    print(f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'} - {detail}",
          flush=True)
    assert ok, f"criterion {number}: {detail}"


# ---------------------------------------------------------------------------
# 1. analytic steering derivatives vs central finite differences

def test_criterion_01_steering_derivatives():
    rng = np.random.default_rng(101)
    h = 1e-6
    worst = 0.0
    started = time.perf_counter()
    for _ in range(100):
        theta = np.deg2rad(rng.uniform(20, 30))
        v = rng.uniform(175, 190)
        d_t = steering_derivative_theta(CFG, Z, theta, 0.0, v)
        fd_t = (space_time_steering(CFG, Z, theta + h, 0.0, v)
                - space_time_steering(CFG, Z, theta - h, 0.0, v)) / (2 * h)
        worst = max(worst, np.linalg.norm(d_t - fd_t) / np.linalg.norm(d_t))
        d_v = steering_derivative_velocity(CFG, Z, theta, 0.0, v)
        fd_v = (space_time_steering(CFG, Z, theta, 0.0, v + h)
                - space_time_steering(CFG, Z, theta, 0.0, v - h)) / (2 * h)
        worst = max(worst, np.linalg.norm(d_v - fd_v) / np.linalg.norm(d_v))
    elapsed = time.perf_counter() - started
    _report(1, worst < 1e-5 and elapsed < 1.0,
            f"max relative error {worst:.2e} over 100 grid points in "
            f"{elapsed:.2f} s")


# ---------------------------------------------------------------------------
# 2. vectorized statistic equals the naive double-loop evaluation

def test_criterion_02_namf_oracle():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(10):
        a = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        y = rng.standard_normal((64, 300)) + 1j * rng.standard_normal((64, 300))
        num = 0.0
        for j in range(300):
            inner = 0.0
            for i in range(64):
                inner += np.conj(a[i]) * y[i, j]
            num += abs(inner) ** 2
        a_energy = sum(abs(x) ** 2 for x in a)
        col = [sum(abs(y[i, j]) ** 2 for i in range(64)) for j in range(300)]
        naive = num / (a_energy * math.sqrt(sum(c * c for c in col)))
        worst = max(worst, abs(namf(a, y) - naive) / naive)
    _report(2, worst <= 1e-12,
            f"max relative deviation {worst:.2e} on 10 random 64x300 instances")


# ---------------------------------------------------------------------------
# 3. whitened clutter-plus-noise has identity sample covariance

def test_criterion_03_whitening_identity():
    rng = derive_rng(103)
    draws = draw_clutter_noise(MODEL, 100_000, rng, "clutter") \
        + draw_clutter_noise(MODEL, 100_000, rng, "noise")
    white = whiten(MODEL.total, draws)
    sample = white @ white.conj().T / white.shape[1]
    err = np.linalg.norm(sample - np.eye(64)) / np.linalg.norm(np.eye(64))
    _report(3, err < 0.05, f"Frobenius relative error {err:.4f} at 1e5 draws")


# ---------------------------------------------------------------------------
# 4. closed-form information vs Monte Carlo squared score

def test_criterion_04_fisher_oracle():
    started = time.perf_counter()
    rng = derive_rng(104)
    truth = place_target(CFG, rng)
    steer = space_time_steering(CFG, Z, np.deg2rad(truth.azimuth_deg), 0.0,
                                truth.velocity_mps)
    amp = calibrate_amplitude(CFG, MODEL, steer)
    report = crb_for_trial(CFG, Z, MODEL, truth, amp)
    mc_t = fisher_monte_carlo_check(CFG, Z, MODEL, truth, amp, 10_000,
                                    derive_rng(105), "theta")
    mc_v = fisher_monte_carlo_check(CFG, Z, MODEL, truth, amp, 10_000,
                                    derive_rng(106), "velocity")
    err_t = abs(mc_t - report.fisher_theta) / report.fisher_theta
    err_v = abs(mc_v - report.fisher_velocity) / report.fisher_velocity
    elapsed = time.perf_counter() - started
    _report(4, err_t < 0.10 and err_v < 0.10 and elapsed < 120,
            f"azimuth {err_t:.3f}, velocity {err_v:.3f} relative deviation "
            f"at 1e4 draws in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 5. averaged bound scales inversely with output SCNR

def test_criterion_05_crb_scaling_law():
    truths = [place_target(CFG, derive_rng(107, i)) for i in range(40)]
    scnr_values = np.arange(-20.0, 25.0, 5.0)
    means_t, means_v = [], []
    for scnr in scnr_values:
        cfg = dataclasses.replace(CFG, target_scnr_db=float(scnr))
        trials = []
        for truth in truths:
            steer = space_time_steering(cfg, Z, np.deg2rad(truth.azimuth_deg),
                                        0.0, truth.velocity_mps)
            trials.append((truth, calibrate_amplitude(cfg, MODEL, steer)))
        mean_t, mean_v, _ = crb_sweep_average(cfg, Z, MODEL, trials)
        means_t.append(mean_t)
        means_v.append(mean_v)
    slope_t = np.polyfit(scnr_values, 10 * np.log10(means_t), 1)[0]
    slope_v = np.polyfit(scnr_values, 10 * np.log10(means_v), 1)[0]
    ok = abs(slope_t + 1.0) <= 0.01 and abs(slope_v + 1.0) <= 0.01
    _report(5, ok, f"dB-per-dB slopes: azimuth {slope_t:+.6f}, "
                   f"velocity {slope_v:+.6f}")


# ---------------------------------------------------------------------------
# 6. gradient descent convergence on noise-free trials

def _oracle_trial(theta_deg, v, amplitude, rng, snapshots=64):
    steer = space_time_steering(CFG, Z, np.deg2rad(theta_deg), 0.0, v)
    phases = rng.uniform(0, 2 * np.pi, snapshots)
    return np.outer(steer, amplitude * np.exp(1j * phases))


def _matched_amplitude(kind, theta_deg, v, rate, rng, contraction=0.5):
    """Signal modulus at which one benchmark-rate descent step contracts the
    parameter error by ``contraction``, from the unit-amplitude curvature."""
    y = _oracle_trial(theta_deg, v, 1.0, rng)
    h = 1e-3
    if kind == "theta":
        loss = lambda t: gd_loss(space_time_steering(
            CFG, Z, np.deg2rad(t), 0.0, v), y)
        x = theta_deg
    else:
        loss = lambda u: gd_loss(space_time_steering(
            CFG, Z, np.deg2rad(theta_deg), 0.0, u), y)
        x = v
    curv = (loss(x + h) - 2 * loss(x) + loss(x - h)) / h ** 2
    return float(np.sqrt(contraction / (rate * curv)))


def test_criterion_06_gd_noise_free_convergence():
    gd = GdConfig()   # benchmark hyperparameters
    az_grid = CFG.azimuth_grid_deg()
    vel_grid = CFG.velocity_grid_mps()
    hits = 0
    n_trials = 100
    for k in range(n_trials):
        rng = derive_rng(108, k)
        theta = float(az_grid[rng.integers(1, CFG.n_azimuth - 1)])
        v = float(vel_grid[rng.integers(1, CFG.n_velocity - 1)])
        sign_t = 1 if rng.uniform() < 0.5 else -1
        sign_v = 1 if rng.uniform() < 0.5 else -1

        amp_t = _matched_amplitude("theta", theta, v, gd.learning_rate_az, rng)
        y_t = _oracle_trial(theta, v, amp_t, rng)
        est_t = gd_azimuth(CFG, Z, y_t, theta + sign_t * CFG.azimuth_step_deg,
                           v, gd)

        amp_v = _matched_amplitude("velocity", theta, v, gd.learning_rate_vel, rng)
        y_v = _oracle_trial(theta, v, amp_v, rng)
        est_v = gd_velocity(CFG, Z, y_v, theta,
                            v + sign_v * CFG.velocity_step_mps, gd)

        if (abs(est_t.azimuth_deg - theta) < 0.01
                and abs(est_v.velocity_mps - v) < 0.01):
            hits += 1
    _report(6, hits >= 95,
            f"{hits}/100 noise-free trials converged below 0.01 deg and "
            f"0.01 m/s with the benchmark step sizes")


# ---------------------------------------------------------------------------
# 7 and 8 share one desk-scale evaluation point

@pytest.fixture(scope="module")
def desk_scale_point():
    spec = bench.SweepSpec(axis="scnr", scnr_values_db=(20.0,), n_trials=2000,
                           master_seed=42)
    report = bench.run_sweep(spec, CFG, workers=8)
    return report.points[0]


def test_criterion_07_estimator_ordering(desk_scale_point):
    point = desk_scale_point
    mp, gd, cnn = (point.methods[m] for m in ("MP", "GD", "CNN"))
    ok = (gd.mse_theta <= mp.mse_theta and gd.mse_velocity <= mp.mse_velocity
          and cnn.mse_theta < mp.mse_theta and cnn.mse_velocity < mp.mse_velocity)
    _report(7, ok,
            "MSE at 20 dB, K=300, 200 test trials: "
            f"theta MP {mp.mse_theta:.4g} GD {gd.mse_theta:.4g} "
            f"CNN {cnn.mse_theta:.4g} | velocity MP {mp.mse_velocity:.4g} "
            f"GD {gd.mse_velocity:.4g} CNN {cnn.mse_velocity:.4g}")


def test_criterion_08_bias_dominance(desk_scale_point):
    point = desk_scale_point
    identity_ok = all(
        abs(err.mse_theta - (err.bias2_theta + err.var_theta)) <= 1e-10
        and abs(err.mse_velocity - (err.bias2_velocity + err.var_velocity)) <= 1e-10
        for err in point.methods.values())
    cnn = point.methods["CNN"]
    ratio_t = cnn.bias2_theta / cnn.mse_theta
    ratio_v = cnn.bias2_velocity / cnn.mse_velocity
    dominance = max(ratio_t, ratio_v) > 0.5
    _report(8, identity_ok and dominance,
            f"decomposition identity {'holds' if identity_ok else 'BROKEN'}; "
            f"network squared-bias share: azimuth {ratio_t:.3f}, "
            f"velocity {ratio_v:.3f}")


# ---------------------------------------------------------------------------
# 9. byte-identical sweep output across worker counts

def test_criterion_09_reproducibility(tmp_path):
    started = time.perf_counter()
    spec = bench.SweepSpec(axis="scnr", n_trials=200, master_seed=7)
    paths = []
    for workers in (1, 2):
        report = bench.run_sweep(spec, CFG, workers=workers)
        path = tmp_path / f"report_w{workers}.csv"
        bench.write_report_csv(report, path)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()
    elapsed = time.perf_counter() - started
    _report(9, identical and elapsed < 1800,
            f"9-point sweep CSVs {'identical' if identical else 'DIFFER'} "
            f"across worker counts; both runs in {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# 10. network backpropagation vs finite differences

def test_criterion_10_cnn_gradient_check():
    rng = np.random.default_rng(110)
    model = learned._init_for_shape((2, 6, 6), rng, channels=(4, 6),
                                    dense_units=8)
    x = rng.standard_normal((2, 2, 6, 6))
    targets = rng.uniform(0, 1, (2, 2))
    _, grads = learned.batch_loss_and_grads(model, x, targets)
    h = 1e-5
    worst = 0.0
    for name, arr in model.parameters():
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up, _ = learned.batch_loss_and_grads(model, x, targets)
            arr[idx] = orig - h
            down, _ = learned.batch_loss_and_grads(model, x, targets)
            arr[idx] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(grads[name][idx]), 1e-8)
            worst = max(worst, abs(fd - grads[name][idx]) / denom)
    _report(10, worst < 1e-3,
            f"max relative gradient error {worst:.2e} over "
            f"{model.parameter_count} parameters")
