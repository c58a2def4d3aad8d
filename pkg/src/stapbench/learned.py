"""Small convolutional regression network mapping heatmap tensors to (azimuth,
velocity), implemented from first principles in 64-bit numpy.

Architecture: two 3x3 same-padded convolution stages (range bins are the
input channels; 16 then 32 filters), each followed by a rectifier and 2x2
max pooling, then a 64-unit rectified dense layer and a 2-unit linear head.
Targets are min-max normalized to [0, 1] over the processing-region box;
de-normalized predictions are clamped back into the box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .heatmap import HeatmapTensor
from .scene import SceneConfig, TargetTruth


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 260              # cosine-annealed epochs after the warmups
    batch_size: int = 64
    step_size: float = 2e-3        # peak adaptive-moment step
    final_step_fraction: float = 0.01   # cosine floor relative to the peak
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    validation_fraction: float = 0.1
    patience: int = 10 ** 9        # early stop is off by default: the cosine
    restarts: int = 3              # schedule has a fixed, deterministic length
    restart_epochs: int = 25       # constant-rate warmup phases; best continues
    seed: int = 0
    input_mode: str = "max"        # "max", "log", or "raw"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.restarts < 1 or self.restart_epochs < 1:
            raise ValueError("restarts and restart_epochs must be >= 1")
        if not 0.0 < self.final_step_fraction <= 1.0:
            raise ValueError("final_step_fraction must be in (0, 1]")
        if self.input_mode not in ("max", "log", "raw"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")


@dataclass
class CnnModel:
    """Parameter arrays plus the normalization constants baked in at training."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    input_shape: tuple[int, int, int]
    theta_box: tuple[float, float]
    velocity_box: tuple[float, float]
    input_mode: str = "max"

    _PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
                    "dense_w", "dense_b", "head_w", "head_b")

    def parameters(self):
        """(name, array) pairs in declaration order."""
        return [(name, getattr(self, name)) for name in self._PARAM_NAMES]

    @property
    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameters())

    def copy(self) -> "CnnModel":
        kwargs = {name: arr.copy() for name, arr in self.parameters()}
        return replace(self, **kwargs)


def init_model(cfg: SceneConfig, rng: np.random.Generator,
               channels: tuple[int, int] = (16, 32), dense_units: int = 64,
               input_mode: str = "max") -> CnnModel:
    """He-style initialization sized for the configured heatmap tensors."""
    c_in = cfg.num_range_bins
    h, w = cfg.n_azimuth, cfg.n_velocity
    return _init_for_shape((c_in, h, w), rng, channels, dense_units,
                           (cfg.azimuth_min_deg, cfg.azimuth_max_deg),
                           (cfg.velocity_min_mps, cfg.velocity_max_mps),
                           input_mode)


def _init_for_shape(input_shape, rng, channels=(16, 32), dense_units=64,
                    theta_box=(0.0, 1.0), velocity_box=(0.0, 1.0),
                    input_mode="max") -> CnnModel:
    c_in, h, w = input_shape
    c1, c2 = channels
    h2, w2 = -(-h // 2), -(-w // 2)     # ceil-mode pooling keeps edge cells
    h4, w4 = -(-h2 // 2), -(-w2 // 2)
    flat = c2 * h4 * w4
    if flat == 0:
        raise ValueError(f"input shape {input_shape} too small for two pooling stages")

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    return CnnModel(
        conv1_w=he((c1, c_in, 3, 3), c_in * 9),
        conv1_b=np.zeros(c1),
        conv2_w=he((c2, c1, 3, 3), c1 * 9),
        conv2_b=np.zeros(c2),
        dense_w=he((flat, dense_units), flat),
        dense_b=np.zeros(dense_units),
        head_w=he((dense_units, 2), dense_units),
        head_b=np.full(2, 0.5),    # start at the box center in normalized units
        input_shape=(c_in, h, w),
        theta_box=theta_box,
        velocity_box=velocity_box,
        input_mode=input_mode,
    )


# ---------------------------------------------------------------------------
# layers (forward returns a cache consumed by the matching backward)

def _windows(x):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))


def _conv_forward(x, w, b):
    win = _windows(x)
    y = np.einsum("bihwkl,oikl->bohw", win, w, optimize=True)
    return y + b[None, :, None, None], (x, w)


def _conv_backward(dout, cache, need_dx=True):
    x, w = cache
    win = _windows(x)
    dw = np.einsum("bihwkl,bohw->oikl", win, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    if not need_dx:
        return None, dw, db
    # dx is the same-padded correlation of dout with the flipped, transposed
    # kernels; stride-1 3x3 same padding makes this exact.
    w_t = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dx = np.einsum("bohwkl,iokl->bihw", _windows(dout), w_t, optimize=True)
    return dx, dw, db


def _relu_forward(x):
    mask = x > 0
    return x * mask, mask


def _relu_backward(dout, mask):
    return dout * mask


def _pool_forward(x):
    # ceil-mode 2x2 max pooling: odd trailing rows/columns are padded with
    # -inf so edge cells survive instead of being cropped away.
    batch, c, h, width = x.shape
    h2, w2 = -(-h // 2), -(-width // 2)
    xp = np.pad(x, ((0, 0), (0, 0), (0, h2 * 2 - h), (0, w2 * 2 - width)),
                constant_values=-np.inf)
    blocks = xp.reshape(batch, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(batch, c, h2, w2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def _pool_backward(dout, cache):
    (batch, c, h, width), idx = cache
    h2, w2 = -(-h // 2), -(-width // 2)
    dblocks = np.zeros((batch, c, h2, w2, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dxp = dblocks.reshape(batch, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dxp = dxp.reshape(batch, c, h2 * 2, w2 * 2)
    return dxp[:, :, :h, :width]


def _dense_forward(x, w, b):
    return x @ w + b, x


def _dense_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def forward(model: CnnModel, batch: np.ndarray, with_cache: bool = False):
    """Normalized (azimuth, velocity) predictions for a (B, C, H, W) batch."""
    if batch.ndim == 3:
        batch = batch[None]
    if batch.shape[1:] != model.input_shape:
        raise ValueError(
            f"input shape {batch.shape[1:]} does not match model "
            f"input {model.input_shape}")
    a1, cache1 = _conv_forward(batch, model.conv1_w, model.conv1_b)
    r1, mask1 = _relu_forward(a1)
    p1, pcache1 = _pool_forward(r1)
    a2, cache2 = _conv_forward(p1, model.conv2_w, model.conv2_b)
    r2, mask2 = _relu_forward(a2)
    p2, pcache2 = _pool_forward(r2)
    flat = p2.reshape(p2.shape[0], -1)
    d1, dcache = _dense_forward(flat, model.dense_w, model.dense_b)
    rd, maskd = _relu_forward(d1)
    out, hcache = _dense_forward(rd, model.head_w, model.head_b)
    if not with_cache:
        return out
    caches = (cache1, mask1, pcache1, cache2, mask2, pcache2,
              p2.shape, dcache, maskd, hcache)
    return out, caches


def backward(model: CnnModel, caches, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d loss/d output."""
    (cache1, mask1, pcache1, cache2, mask2, pcache2,
     p2_shape, dcache, maskd, hcache) = caches
    d_rd, d_head_w, d_head_b = _dense_backward(dout, hcache, model.head_w)
    d_d1 = _relu_backward(d_rd, maskd)
    d_flat, d_dense_w, d_dense_b = _dense_backward(d_d1, dcache, model.dense_w)
    d_p2 = d_flat.reshape(p2_shape)
    d_r2 = _pool_backward(d_p2, pcache2)
    d_a2 = _relu_backward(d_r2, mask2)
    d_p1, d_conv2_w, d_conv2_b = _conv_backward(d_a2, cache2)
    d_r1 = _pool_backward(d_p1, pcache1)
    d_a1 = _relu_backward(d_r1, mask1)
    # the first layer's input gradient has no consumer
    _, d_conv1_w, d_conv1_b = _conv_backward(d_a1, cache1, need_dx=False)
    return {
        "conv1_w": d_conv1_w, "conv1_b": d_conv1_b,
        "conv2_w": d_conv2_w, "conv2_b": d_conv2_b,
        "dense_w": d_dense_w, "dense_b": d_dense_b,
        "head_w": d_head_w, "head_b": d_head_b,
    }


# ---------------------------------------------------------------------------
# normalization and prediction

def normalize_inputs(model_or_mode, tensors: np.ndarray) -> np.ndarray:
    """Stacked-tensor conditioning for the network input.

    ``max`` rescales each tensor by its peak; ``log`` additionally log
    compresses so near-peak ratios become differences, then min-max rescales
    per tensor; ``raw`` passes values through untouched.
    """
    mode = getattr(model_or_mode, "input_mode", model_or_mode)
    x = np.asarray(tensors, dtype=float)
    if mode == "raw":
        return x
    single = x.ndim == 3
    if single:
        x = x[None]
    flat = x.reshape(x.shape[0], -1)
    peaks = flat.max(axis=1)
    peaks = np.where(peaks > 0, peaks, 1.0)
    x = x / peaks[:, None, None, None]
    if mode == "log":
        x = np.log(x + 1e-4)
        flat = x.reshape(x.shape[0], -1)
        lo = flat.min(axis=1)[:, None, None, None]
        hi = flat.max(axis=1)[:, None, None, None]
        x = (x - lo) / np.where(hi > lo, hi - lo, 1.0)
    return x[0] if single else x


def normalize_targets(model: CnnModel, truths) -> np.ndarray:
    t_lo, t_hi = model.theta_box
    v_lo, v_hi = model.velocity_box
    out = np.empty((len(truths), 2))
    for i, truth in enumerate(truths):
        out[i, 0] = (truth.azimuth_deg - t_lo) / (t_hi - t_lo)
        out[i, 1] = (truth.velocity_mps - v_lo) / (v_hi - v_lo)
    return out


def predict(model: CnnModel, tensor) -> tuple[float, float]:
    """De-normalized (azimuth, velocity) for one tensor, clamped to the box."""
    values = tensor.values if isinstance(tensor, HeatmapTensor) else np.asarray(tensor)
    x = normalize_inputs(model, values)[None]
    out = forward(model, x)[0]
    t_lo, t_hi = model.theta_box
    v_lo, v_hi = model.velocity_box
    theta = float(np.clip(t_lo + out[0] * (t_hi - t_lo), t_lo, t_hi))
    vel = float(np.clip(v_lo + out[1] * (v_hi - v_lo), v_lo, v_hi))
    return theta, vel


# ---------------------------------------------------------------------------
# training

def _adam_step(model, grads, state, cfg: TrainConfig, step_size: float):
    state["t"] += 1
    t = state["t"]
    for name, param in model.parameters():
        g = grads[name]
        m = state["m"][name] = cfg.beta1 * state["m"][name] + (1 - cfg.beta1) * g
        v = state["v"][name] = cfg.beta2 * state["v"][name] + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        param -= step_size * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def batch_loss_and_grads(model: CnnModel, x: np.ndarray, targets: np.ndarray):
    """Mean squared error over a batch and its parameter gradients."""
    out, caches = forward(model, x, with_cache=True)
    resid = out - targets
    loss = float(np.mean(resid ** 2))
    dout = 2.0 * resid / resid.size
    return loss, backward(model, caches, dout)


class _Phase:
    """One training trajectory: model, optimizer state, and bookkeeping."""

    def __init__(self, model: CnnModel, rng: np.random.Generator,
                 train_cfg: TrainConfig):
        self.model = model
        self.rng = rng
        self.cfg = train_cfg
        self.state = {"t": 0,
                      "m": {n: np.zeros_like(p) for n, p in model.parameters()},
                      "v": {n: np.zeros_like(p) for n, p in model.parameters()}}
        self.best = model.copy()
        self.best_val = np.inf
        self.stale = 0
        self.step_size = train_cfg.step_size
        self.history = []

    def run(self, data, n_epochs: int, schedule=None) -> None:
        """Train ``n_epochs`` epochs; ``schedule`` maps a 0..1 phase position
        to a step size (constant peak rate when None)."""
        x_tr, y_tr, x_val, y_val = data
        n_tr = len(x_tr)
        for k in range(n_epochs):
            epoch = len(self.history)
            if schedule is not None:
                self.step_size = schedule(k / max(n_epochs - 1, 1))
            perm = self.rng.permutation(n_tr)
            batch_losses = []
            for start in range(0, n_tr, self.cfg.batch_size):
                sel = perm[start:start + self.cfg.batch_size]
                loss, grads = batch_loss_and_grads(self.model, x_tr[sel], y_tr[sel])
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite training loss at epoch {epoch}, "
                        f"batch {start // self.cfg.batch_size}")
                _adam_step(self.model, grads, self.state, self.cfg, self.step_size)
                batch_losses.append(loss)
            val_pred = forward(self.model, x_val)
            val_loss = float(np.mean((val_pred - y_val) ** 2))
            self.history.append((epoch, float(np.mean(batch_losses)), val_loss))
            if val_loss < self.best_val - 1e-12:
                self.best_val = val_loss
                self.best = self.model.copy()
                self.stale = 0
            else:
                self.stale += 1
                if self.stale >= self.cfg.patience:
                    break


def train(dataset: list[tuple], train_cfg: TrainConfig, cfg: SceneConfig,
          model: CnnModel | None = None):
    """Fit the network on (tensor, truth) pairs; returns (model, history).

    A validation slice is split off the shuffled dataset. ``restarts``
    warmup trajectories of ``restart_epochs`` each start from seeds derived
    as (seed, index) at the peak step size; the one with the lowest
    validation loss continues for ``epochs`` more epochs under a cosine
    step-size decay to ``final_step_fraction`` of the peak. The schedule
    length is fixed, so runs are deterministic in duration as well as in
    values; the returned model is the best-validation snapshot of the
    winning trajectory and ``history`` its (epoch, train_loss, val_loss)
    rows. Passing ``model`` skips the restarts and fine-tunes it directly.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    split_rng = np.random.default_rng(train_cfg.seed)
    probe = model or init_model(cfg, np.random.default_rng(0),
                                input_mode=train_cfg.input_mode)

    values = np.stack([
        t.values if isinstance(t, HeatmapTensor) else np.asarray(t, dtype=float)
        for t, _ in dataset])
    x_all = normalize_inputs(probe, values)
    y_all = normalize_targets(probe, [truth for _, truth in dataset])

    order = split_rng.permutation(len(dataset))
    n_val = max(1, int(round(train_cfg.validation_fraction * len(dataset))))
    if n_val >= len(dataset):
        raise ValueError("dataset too small for the validation split")
    val_idx, tr_idx = order[:n_val], order[n_val:]
    data = (x_all[tr_idx], y_all[tr_idx], x_all[val_idx], y_all[val_idx])

    if model is not None:
        phases = [_Phase(model, np.random.default_rng((train_cfg.seed, 0)),
                         train_cfg)]
    else:
        phases = []
        for r in range(train_cfg.restarts):
            rng = np.random.default_rng((train_cfg.seed, r))
            phases.append(_Phase(init_model(cfg, rng,
                                            input_mode=train_cfg.input_mode),
                                 rng, train_cfg))
    if len(phases) > 1:
        for phase in phases:
            phase.run(data, train_cfg.restart_epochs)
        chosen = min(phases, key=lambda p: p.best_val)
    else:
        chosen = phases[0]

    peak = train_cfg.step_size
    floor = peak * train_cfg.final_step_fraction
    cosine = lambda pos: floor + 0.5 * (peak - floor) * (1 + np.cos(np.pi * pos))
    chosen.run(data, train_cfg.epochs, schedule=cosine)
    return chosen.best, chosen.history


# ---------------------------------------------------------------------------
# evaluation helpers

@dataclass(frozen=True)
class BiasVariance:
    bias2_theta: float
    var_theta: float
    bias2_velocity: float
    var_velocity: float


def bias_variance_decomposition(estimates, truths) -> BiasVariance:
    """Split each parameter's MSE into squared mean error and population variance.

    ``estimates`` is a sequence of (azimuth_deg, velocity_mps) pairs or
    Estimate-like objects; ``truths`` the matching TargetTruth sequence.
    bias^2 + var reproduces the MSE exactly under the population-variance
    convention.
    """
    if len(estimates) != len(truths):
        raise ValueError("estimates and truths differ in length")
    if len(estimates) == 0:
        raise ValueError("empty estimate list")
    err = np.empty((len(truths), 2))
    for i, (est, truth) in enumerate(zip(estimates, truths)):
        theta = getattr(est, "azimuth_deg", None)
        vel = getattr(est, "velocity_mps", None)
        if theta is None:
            theta, vel = est
        err[i, 0] = theta - truth.azimuth_deg
        err[i, 1] = vel - truth.velocity_mps
    mean = err.mean(axis=0)
    var = err.var(axis=0)
    return BiasVariance(bias2_theta=float(mean[0] ** 2), var_theta=float(var[0]),
                        bias2_velocity=float(mean[1] ** 2), var_velocity=float(var[1]))


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line, then float64 little-endian arrays
# in declaration order.

def save_model(model: CnnModel, path) -> None:
    header = {
        "layers": [[name, list(arr.shape)] for name, arr in model.parameters()],
        "input_shape": list(model.input_shape),
        "theta_box": list(model.theta_box),
        "velocity_box": list(model.velocity_box),
        "input_mode": model.input_mode,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for _, arr in model.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for name, shape in header["layers"]:
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint at layer {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return CnnModel(
        input_shape=tuple(header["input_shape"]),
        theta_box=tuple(header["theta_box"]),
        velocity_box=tuple(header["velocity_box"]),
        input_mode=header["input_mode"],
        **arrays,
    )
