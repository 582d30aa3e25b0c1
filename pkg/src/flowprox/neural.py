"""Minimal MLP vector-field model with manual backprop and Adam.

The model maps (x, t) -> v with time entering as one extra raw input
feature.  Parameters are 64-bit floats throughout so checkpoints
round-trip bit-exactly, and training is single-threaded sequential so a
seed pins the whole run.
"""

import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import child_seed, make_rng
from .schedule import EPS_T, Schedule
from .transport import PointCloud, cost_matrix, solve_assignment

__all__ = [
    "Mlp",
    "TrainConfig",
    "init_mlp",
    "forward",
    "forward_batch",
    "loss_and_grads",
    "train_otcfm",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"FLOWPROXMLPCKPT\x00"
CHECKPOINT_VERSION = 1
_ACTIVATIONS = ("tanh", "silu")


@dataclass
class Mlp:
    layer_dims: list
    weights: list
    biases: list
    activation: str

    def __post_init__(self):
        dims = [int(d) for d in self.layer_dims]
        if len(dims) < 2:
            raise ValueError("need at least input and output layers")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.activation!r}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("parameter count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} parameter shapes inconsistent")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
        self.layer_dims = dims


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    steps: int
    lr: float
    schedule: Schedule
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    t_sampling: str = "uniform01"
    hidden_dims: tuple = (128, 128, 128)
    activation: str = "silu"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.t_sampling != "uniform01":
            raise ValueError(f"unknown t sampling: {self.t_sampling!r}")


def init_mlp(layer_dims: Sequence[int], activation: str = "silu", seed: int = 0) -> Mlp:
    """He-style normal init on a dedicated Philox stream."""
    rng = make_rng(seed, stream=0)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases, activation)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _act_prime(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


def forward_batch(model: Mlp, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Vectorized forward pass; ts has shape (B,), xs (B, d)."""
    if xs.shape[1] + 1 != model.layer_dims[0]:
        raise ValueError(
            f"input dim {xs.shape[1]} incompatible with model input "
            f"{model.layer_dims[0]} (expects x plus t feature)")
    a = np.concatenate([xs, ts[:, None]], axis=1)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w.T + b
        if i < last:
            a = _act(a, model.activation)
    return a


def forward(model: Mlp, t: float, x: np.ndarray) -> np.ndarray:
    return forward_batch(model, np.array([float(t)]), np.asarray(x, dtype=float)[None, :])[0]


def loss_and_grads(model: Mlp, ts, xs, targets):
    """MSE loss (mean over batch and coordinates) and parameter gradients."""
    a = np.concatenate([np.asarray(xs, dtype=float),
                        np.asarray(ts, dtype=float)[:, None]], axis=1)
    acts = [a]
    pres = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        pre = acts[-1] @ w.T + b
        pres.append(pre)
        acts.append(_act(pre, model.activation) if i < last else pre)
    diff = acts[-1] - np.asarray(targets, dtype=float)
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / diff.size
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for i in range(last, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * _act_prime(pres[i - 1], model.activation)
    return loss, grads_w, grads_b


class _Adam:
    def __init__(self, model: Mlp, lr: float, betas, eps: float):
        self.lr, self.eps = lr, eps
        self.b1, self.b2 = betas
        self.step = 0
        self.m = [np.zeros_like(p) for p in model.weights + model.biases]
        self.v = [np.zeros_like(p) for p in model.weights + model.biases]

    def update(self, model: Mlp, grads_w, grads_b):
        self.step += 1
        params = model.weights + model.biases
        grads = grads_w + grads_b
        c1 = 1.0 - self.b1 ** self.step
        c2 = 1.0 - self.b2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_otcfm(data, cfg: TrainConfig):
    """Train the vector field with the minibatch OT-CFM objective.

    Each step draws a noise batch from N(0, I_d) and a data batch from the
    target, couples them by exact OT, picks one uniform t per pair, and
    regresses model(t, x_t) onto alpha_dot*x0 + beta_dot*x1.  Returns the
    trained model and the per-step loss trace.
    """
    from . import datasets  # deferred import; datasets does not need neural

    d = data.dim
    model = init_mlp([d + 1, *cfg.hidden_dims, d], cfg.activation, seed=cfg.seed)
    adam = _Adam(model, cfg.lr, cfg.adam_betas, cfg.adam_eps)
    g_noise = make_rng(cfg.seed, stream=1)
    g_time = make_rng(cfg.seed, stream=2)
    losses = np.empty(cfg.steps)
    for step in range(cfg.steps):
        x1 = datasets.sample(data, cfg.batch_size, child_seed(cfg.seed, step)).points
        x0 = g_noise.standard_normal((cfg.batch_size, d))
        coupling = solve_assignment(
            cost_matrix(PointCloud(x0), PointCloud(x1)), duals=False)
        x0m = x0[coupling.perm]
        ts = g_time.uniform(EPS_T, 1.0 - EPS_T, size=cfg.batch_size)
        alpha, beta, alpha_dot, beta_dot = _schedule_batch(cfg.schedule, ts)
        xt = alpha[:, None] * x0m + beta[:, None] * x1
        target = alpha_dot[:, None] * x0m + beta_dot[:, None] * x1
        loss, gw, gb = loss_and_grads(model, ts, xt, target)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite training loss at step {step}")
        adam.update(model, gw, gb)
        losses[step] = loss
    return model, losses


def _schedule_batch(sched: Schedule, ts: np.ndarray):
    if sched.family == "affine":
        return 1.0 - ts, ts, np.full_like(ts, -1.0), np.full_like(ts, 1.0)
    g, e = sched.gamma_exp, sched.eta_exp
    alpha = sched.c_alpha * (1.0 - ts) ** g
    alpha_dot = -sched.c_alpha * g * (1.0 - ts) ** (g - 1.0)
    beta = sched.c_beta * ts ** e
    beta_dot = sched.c_beta * e * ts ** (e - 1.0)
    return alpha, beta, alpha_dot, beta_dot


def save_checkpoint(model: Mlp, path) -> None:
    """16-byte magic, u32 version, JSON header, little-endian f64 block."""
    header = json.dumps({"layer_dims": model.layer_dims,
                         "activation": model.activation}).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for w, b in zip(model.weights, model.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:16] != CHECKPOINT_MAGIC:
        raise ValueError(
            f"bad checkpoint magic at offset 0: expected {CHECKPOINT_MAGIC!r}")
    off = 16
    if len(raw) < off + 8:
        raise ValueError(f"truncated checkpoint header at offset {off}")
    version, header_len = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} "
                         f"(expected {CHECKPOINT_VERSION})")
    off += 8
    if len(raw) < off + header_len:
        raise ValueError(f"truncated checkpoint header at offset {off}")
    meta = json.loads(raw[off:off + header_len].decode())
    off += header_len
    dims = [int(v) for v in meta["layer_dims"]]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_out, fan_in), (fan_out,)):
            count = int(np.prod(shape))
            nbytes = 8 * count
            if len(raw) < off + nbytes:
                raise ValueError(
                    f"truncated checkpoint parameter block at offset {off}: "
                    f"need {nbytes} bytes, have {len(raw) - off}")
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
            off += nbytes
            (weights if len(shape) == 2 else biases).append(
                arr.reshape(shape).astype(float))
    if off != len(raw):
        raise ValueError(f"trailing bytes after checkpoint payload at offset {off}")
    return Mlp(dims, weights, biases, meta["activation"])
