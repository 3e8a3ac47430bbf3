"""Deep ReLU recurrent network, trained by backpropagation through time with Adam.

Each hidden layer computes ``S_t = relu(x_t @ W_x + S_{t-1} @ W_s + b)`` with
``S_{-1} = 0``; the readout is affine in the top layer's state.  Sequences
are batched as (window, step, channel) at the API and as (step, window,
channel) internally so each time slice is contiguous for the kernels.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .core import (ChannelScaler, TimeSeriesDataset, WindowBatch, apply_scaler,
                   build_io, fit_scaler, invert_scaler, sample_windows)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def relu(x):
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    batch_len: int = 40
    windows_per_epoch: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0
    loss_variant: str = "mse"
    # Learning rate reached at the final epoch by exponential decay; None keeps it constant.
    final_learning_rate: float | None = 1e-5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_len < 1 or self.windows_per_epoch < 1:
            raise ValueError("epochs, batch_len and windows_per_epoch must be >= 1")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.loss_variant not in ("mse", "root"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.final_learning_rate is not None and not self.final_learning_rate > 0:
            raise ValueError("final_learning_rate must be positive (or None)")

    def lr_at(self, epoch: int) -> float:
        if self.final_learning_rate is None or self.epochs == 1 or self.learning_rate == 0:
            return self.learning_rate
        frac = epoch / (self.epochs - 1)
        return self.learning_rate * (self.final_learning_rate / self.learning_rate) ** frac


@dataclass
class RnnModel:
    layer_sizes: tuple[int, ...]
    n_in: int
    n_out: int
    params: dict[str, np.ndarray]
    motion_channels: tuple[str, ...] = ()
    load_channels: tuple[str, ...] = ()
    scaler: ChannelScaler | None = None
    config: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def init(cls, n_in: int, layer_sizes: Sequence[int], n_out: int,
             seed: int | np.random.Generator = 0, **kw) -> "RnnModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        params = {}
        fan = n_in
        for i, h in enumerate(layer_sizes):
            params[f"W_x{i}"] = rng.uniform(-1, 1, (fan, h)) / math.sqrt(fan)
            params[f"W_s{i}"] = rng.uniform(-1, 1, (h, h)) / math.sqrt(h)
            params[f"b{i}"] = np.zeros(h)
            fan = h
        params["W_out"] = rng.uniform(-1, 1, (fan, n_out)) / math.sqrt(fan)
        params["b_out"] = np.zeros(n_out)
        model = cls(tuple(int(h) for h in layer_sizes), n_in, n_out, params, **kw)
        model.validate()
        return model

    def validate(self):
        fan = self.n_in
        expected = {}
        for i, h in enumerate(self.layer_sizes):
            if h < 1:
                raise CheckpointError("layer sizes must be positive")
            expected[f"W_x{i}"] = (fan, h)
            expected[f"W_s{i}"] = (h, h)
            expected[f"b{i}"] = (h,)
            fan = h
        expected["W_out"] = (fan, self.n_out)
        expected["b_out"] = (self.n_out,)
        if set(expected) != set(self.params):
            raise CheckpointError(
                f"parameter names {sorted(self.params)} do not match architecture")
        for k, shp in expected.items():
            if self.params[k].shape != shp:
                raise CheckpointError(f"{k} has shape {self.params[k].shape}, expected {shp}")
            if not np.all(np.isfinite(self.params[k])):
                raise CheckpointError(f"{k} has non-finite entries")

    @property
    def input_channels(self) -> tuple[str, ...]:
        return self.motion_channels + self.load_channels

    @property
    def input_scaler(self) -> ChannelScaler | None:
        return None if self.scaler is None else self.scaler.subset(self.input_channels)

    @property
    def output_scaler(self) -> ChannelScaler | None:
        return None if self.scaler is None else self.scaler.subset(self.load_channels)

    def copy(self) -> "RnnModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


# ------------------------------------------------------------------ forward

def cell_step(W_x: np.ndarray, W_s: np.ndarray, bias: np.ndarray, x_t: np.ndarray,
              S_prev: np.ndarray) -> np.ndarray:
    x_t = np.asarray(x_t, float)
    S_prev = np.asarray(S_prev, float)
    if x_t.shape[-1] != W_x.shape[0] or S_prev.shape[-1] != W_s.shape[0]:
        raise ValueError("cell input or state width does not match weights")
    return relu(x_t @ W_x + S_prev @ W_s + bias)


def _forward(model: RnnModel, X: np.ndarray):
    """X is (step, window, n_in); returns outputs and per-layer inputs/states."""
    T, B, _ = X.shape
    p = model.params
    inputs, states = [], []
    h_in = X
    for i, _h in enumerate(model.layer_sizes):
        P = (h_in.reshape(T * B, -1) @ p[f"W_x{i}"] + p[f"b{i}"]).reshape(T, B, -1)
        S = kernels.relu_forward(np.ascontiguousarray(P), p[f"W_s{i}"])
        inputs.append(h_in)
        states.append(S)
        h_in = S
    Y = (h_in.reshape(T * B, -1) @ p["W_out"] + p["b_out"]).reshape(T, B, -1)
    return Y, inputs, states


def forward_sequence(model: RnnModel, inputs: np.ndarray):
    """Run one sequence (step, n_in) or a batch (window, step, n_in).

    Returns outputs of matching leading shape and the final hidden state of
    every layer.
    """
    x = np.asarray(inputs, float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[-1] != model.n_in:
        raise ValueError(f"input width {x.shape[-1]} != model n_in {model.n_in}")
    if x.shape[1] == 0:
        empty = np.zeros((x.shape[0], 0, model.n_out))
        return (empty[0] if single else empty), []
    Y, _, states = _forward(model, np.ascontiguousarray(x.transpose(1, 0, 2)))
    Y = Y.transpose(1, 0, 2)
    finals = [S[-1] for S in states]
    if single:
        return Y[0], [f[0] for f in finals]
    return Y, finals


# ------------------------------------------------------------------ losses

def loss(outputs: np.ndarray, targets: np.ndarray, variant: str = "mse") -> float:
    """``mse``: mean over windows and steps of the per-step sum of squared
    channel errors.  ``root``: the square root of the total squared error
    divided by the number of window-steps."""
    if np.shape(outputs) != np.shape(targets):
        raise ValueError(
            f"outputs {np.shape(outputs)} and targets {np.shape(targets)} differ in shape")
    e = np.asarray(outputs, float) - np.asarray(targets, float)
    n = int(np.prod(e.shape[:-1])) if e.ndim > 1 else 1
    sq = float(np.sum(e * e))
    if variant == "mse":
        return sq / n
    if variant == "root":
        return math.sqrt(sq) / n
    raise ValueError(f"unknown loss variant {variant!r}")


def _loss_grad(e: np.ndarray, variant: str, reduction: str) -> tuple[float, np.ndarray]:
    n = int(np.prod(e.shape[:-1]))
    sq = float(np.sum(e * e))
    if variant == "mse":
        if reduction == "sum":
            return sq, 2.0 * e
        return sq / n, 2.0 * e / n
    if variant == "root":
        r = math.sqrt(sq)
        g = e / (n * r) if r > 0 else np.zeros_like(e)
        return r / n, g
    raise ValueError(f"unknown loss variant {variant!r}")


def bptt_gradients(model: RnnModel, batch: WindowBatch | tuple[np.ndarray, np.ndarray],
                   variant: str = "mse", reduction: str = "mean"
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its exact gradient with respect to every parameter.

    ``reduction='sum'`` drops the 1/(windows * steps) factor of the mse loss.
    """
    if isinstance(batch, WindowBatch):
        xin, yt = batch.inputs, batch.targets
    else:
        xin, yt = batch
    X = np.ascontiguousarray(np.transpose(xin, (1, 0, 2)), dtype=float)
    Yt = np.ascontiguousarray(np.transpose(yt, (1, 0, 2)), dtype=float)
    T, B, _ = X.shape
    p = model.params
    Y, inputs, states = _forward(model, X)
    L, dY = _loss_grad(Y - Yt, variant, reduction)

    grads = {}
    top = states[-1].reshape(T * B, -1)
    dY2 = dY.reshape(T * B, -1)
    grads["W_out"] = top.T @ dY2
    grads["b_out"] = dY2.sum(axis=0)
    G = (dY2 @ p["W_out"].T).reshape(T, B, -1)
    for i in range(len(model.layer_sizes) - 1, -1, -1):
        S = states[i]
        Ws = p[f"W_s{i}"]
        D = kernels.relu_backward(np.ascontiguousarray(G), S, Ws)
        H = S.shape[2]
        D2 = D.reshape(T * B, H)
        grads[f"W_s{i}"] = S[:-1].reshape(-1, H).T @ D[1:].reshape(-1, H) if T > 1 \
            else np.zeros_like(Ws)
        h_in = inputs[i].reshape(T * B, -1)
        grads[f"W_x{i}"] = h_in.T @ D2
        grads[f"b{i}"] = D2.sum(axis=0)
        if i > 0:
            G = (D2 @ p[f"W_x{i}"].T).reshape(T, B, -1)
    return L, grads


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update.  Updates ``params`` and ``state`` in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


# ------------------------------------------------------------------ training

def train(dataset: TimeSeriesDataset, layer_sizes: Sequence[int], config: TrainConfig,
          motion: Sequence[str] = ("h_bar", "alpha"),
          loads: Sequence[str] = ("C_L", "C_M"),
          scaler: ChannelScaler | None = None,
          progress_every: int = 0) -> tuple[RnnModel, np.ndarray]:
    """Fit a surrogate mapping ``[motion(k+1), loads(k)] -> loads(k+1)``.

    Data are min-max scaled with ``scaler`` (fitted on ``dataset`` when not
    given).  Each epoch draws ``windows_per_epoch`` windows and takes one Adam
    step.  Returns the model and the per-epoch loss history.
    """
    motion, loads = tuple(motion), tuple(loads)
    sub = dataset.select(motion + loads)
    if scaler is None:
        scaler = fit_scaler(sub)
    scaled = apply_scaler(sub, scaler)
    rng = np.random.default_rng(config.rng_seed)
    model = RnnModel.init(len(motion) + len(loads), layer_sizes, len(loads), seed=rng,
                          motion_channels=motion, load_channels=loads, scaler=scaler,
                          config=config)
    adam = AdamState.zeros_like(model.params)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        batch = sample_windows(scaled, config.batch_len, config.windows_per_epoch, rng,
                               motion=motion, loads=loads)
        L, grads = bptt_gradients(model, batch, config.loss_variant)
        if not math.isfinite(L):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}; lower learning_rate "
                f"(currently {config.learning_rate:g})")
        history[epoch] = L
        adam_step(model.params, grads, adam, config.lr_at(epoch), config.adam_beta1,
                  config.adam_beta2, config.adam_eps)
        if progress_every and (epoch + 1) % progress_every == 0:
            log.info("epoch %d loss %.3e", epoch + 1, L)
    return model, history


def evaluate_loss(model: RnnModel, dataset: TimeSeriesDataset, batch_len: int | None = None,
                  variant: str = "mse") -> float:
    """Loss over every window of ``batch_len`` steps in ``dataset`` (scaled units)."""
    batch_len = batch_len or model.config.batch_len
    sub = dataset.select(model.input_channels)
    if model.scaler is not None:
        sub = apply_scaler(sub, model.input_scaler)
    names = model.input_channels
    xin, yout = build_io(sub.samples, [names.index(c) for c in model.motion_channels],
                         [names.index(c) for c in model.load_channels])
    n = xin.shape[0] - batch_len + 1
    idx = np.arange(n)[:, None] + np.arange(batch_len)[None, :]
    out, _ = forward_sequence(model, xin[idx])
    return loss(out, yout[idx], variant)


# ------------------------------------------------------------------ inference

def _scale_in(model: RnnModel, x: np.ndarray) -> np.ndarray:
    return x if model.scaler is None else apply_scaler(x, model.input_scaler)


def _unscale_out(model: RnnModel, y: np.ndarray) -> np.ndarray:
    return y if model.scaler is None else invert_scaler(y, model.output_scaler)


def predict_single_step(model: RnnModel, window: np.ndarray) -> np.ndarray:
    """Physical loads one step past ``window`` (rows ``[motion(k+1), loads(k)]``)."""
    x = _scale_in(model, np.asarray(window, float))
    out, _ = forward_sequence(model, x)
    return _unscale_out(model, out[-1])


class Rollout:
    """Closed-loop predictor that feeds its own load predictions back as inputs.

    ``motion_hist[i]`` and ``load_hist[i]`` are aligned samples; each call to
    :meth:`advance` supplies the next motion sample and returns the predicted
    loads at it.  Windows are ``window`` rows long (the training batch length
    by default) with the hidden state reset per window.
    """

    def __init__(self, model: RnnModel, motion_hist: np.ndarray, load_hist: np.ndarray,
                 window: int | None = None):
        self.model = model
        self.window = window or model.config.batch_len
        m = np.atleast_2d(np.asarray(motion_hist, float))
        ld = np.atleast_2d(np.asarray(load_hist, float))
        if m.shape[0] != ld.shape[0] or m.shape[0] < 1:
            raise ValueError("motion and load histories must be aligned and non-empty")
        if m.shape[1] + ld.shape[1] != model.n_in or ld.shape[1] != model.n_out:
            raise ValueError("history widths do not match model inputs/outputs")
        # scaled input rows [motion(i+1), loads(i)] for completed pairs
        self._rows = [_scale_in(model, np.concatenate([m[i + 1], ld[i]]))
                      for i in range(m.shape[0] - 1)]
        self._last_load = ld[-1]

    def advance(self, motion: np.ndarray) -> np.ndarray:
        row = _scale_in(self.model, np.concatenate([np.asarray(motion, float),
                                                    self._last_load]))
        self._rows.append(row)
        win = np.array(self._rows[-self.window:])
        out, _ = forward_sequence(self.model, win)
        y = _unscale_out(self.model, out[-1])
        self._last_load = y
        if len(self._rows) > 4 * self.window:
            del self._rows[:len(self._rows) - self.window]
        return y


def predict_rollout(model: RnnModel, motion_hist: np.ndarray, load_hist: np.ndarray,
                    motion_future: np.ndarray, window: int | None = None) -> np.ndarray:
    """Loads for each row of ``motion_future`` by closed-loop prediction."""
    motion_future = np.asarray(motion_future, float)
    if motion_future.ndim == 1:
        motion_future = motion_future.reshape(-1, model.n_in - model.n_out)
    ro = Rollout(model, motion_hist, load_hist, window)
    out = np.empty((motion_future.shape[0], model.n_out))
    for j, mrow in enumerate(motion_future):
        out[j] = ro.advance(mrow)
    return out


# ------------------------------------------------------------------ checkpoints

def checkpoint_dict(model: RnnModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "arch": {"layer_sizes": list(model.layer_sizes), "n_in": model.n_in,
                 "n_out": model.n_out, "activation": "relu",
                 "motion_channels": list(model.motion_channels),
                 "load_channels": list(model.load_channels)},
        "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in model.params.items()},
        "scalers": {} if model.scaler is None else {"all": model.scaler.to_dict()},
        "config": asdict(model.config),
    }


def save_checkpoint(model: RnnModel, path: str | Path):
    Path(path).write_text(json.dumps(checkpoint_dict(model), sort_keys=True, indent=1))


def model_from_dict(d: dict) -> RnnModel:
    try:
        if d["format_version"] != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {d['format_version']}")
        arch = d["arch"]
        params = {}
        for k, w in d["weights"].items():
            data = np.asarray(w["data"], dtype=float)
            shape = tuple(int(s) for s in w["shape"])
            if data.size != int(np.prod(shape)):
                raise CheckpointError(f"{k}: {data.size} values for shape {shape}")
            params[k] = data.reshape(shape)
        scaler = ChannelScaler.from_dict(d["scalers"]["all"]) if d.get("scalers") else None
        model = RnnModel(tuple(arch["layer_sizes"]), int(arch["n_in"]), int(arch["n_out"]),
                         params, tuple(arch.get("motion_channels", ())),
                         tuple(arch.get("load_channels", ())), scaler,
                         TrainConfig(**d.get("config", {})))
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    model.validate()
    return model


def load_checkpoint(path: str | Path) -> RnnModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(d)
