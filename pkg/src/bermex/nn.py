"""Feedforward networks with reverse-mode gradients and Adam, numpy only.

Networks are small (a few dozen nodes, one output); batched matrix products
carry all the arithmetic, so this stays on BLAS without any framework.
Parameters are plain lists of arrays and are treated as immutable values
between optimizer steps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")

_SIGMOID_FLOOR = 1e-300
_SIGMOID_CEIL = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class NetSpec:
    """Architecture: input width, hidden widths, activation tags, init seed."""

    input_dim: int
    hidden: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "sigmoid"
    init_seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or len(self.hidden) < 1 or min(self.hidden) < 1:
            raise ValueError("need input_dim >= 1 and at least one nonempty hidden layer")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)


@dataclass(frozen=True)
class NetParams:
    """Per-layer weight matrices (in_size x out_size) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError("weight/bias shapes inconsistent")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters contain non-finite values")

    def copy(self) -> "NetParams":
        return NetParams(
            tuple(w.copy() for w in self.weights), tuple(b.copy() for b in self.biases)
        )


def init_params(spec: NetSpec) -> NetParams:
    """Zero biases; weights i.i.d. normal scaled by sqrt(2 / fan_in)."""
    gen = np.random.Generator(np.random.Philox(key=spec.init_seed))
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(gen.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return NetParams(tuple(weights), tuple(biases))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        with np.errstate(over="ignore"):
            out = 1.0 / (1.0 + np.exp(-z))
        return np.clip(out, _SIGMOID_FLOOR, _SIGMOID_CEIL)
    return z


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def forward(spec: NetSpec, params: NetParams, batch: np.ndarray) -> np.ndarray:
    """Network outputs for a batch, shape (B, 1)."""
    out, _ = forward_cached(spec, params, batch)
    return out


def forward_cached(spec: NetSpec, params: NetParams, batch: np.ndarray):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise ValueError(f"batch must be (B, {spec.input_dim}), got {batch.shape}")
    n_layers = len(params.weights)
    acts = [batch]
    pre = []
    a = batch
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        name = spec.output_activation if i == n_layers - 1 else spec.hidden_activation
        a = _activate(name, z)
        pre.append(z)
        acts.append(a)
    return acts[-1], (acts, pre)


def backward(
    spec: NetSpec,
    params: NetParams,
    batch: np.ndarray,
    upstream: np.ndarray,
    cache=None,
):
    """Exact gradients of sum(upstream * output) w.r.t. every weight and bias.

    ``upstream`` is dLoss/dOutput per sample, shape (B, 1).  Returns
    (weight_grads, bias_grads) shaped like the parameters.
    """
    if cache is None:
        _, cache = forward_cached(spec, params, batch)
    acts, pre = cache
    upstream = np.asarray(upstream, dtype=np.float64).reshape(acts[-1].shape)
    n_layers = len(params.weights)
    w_grads = [None] * n_layers
    b_grads = [None] * n_layers
    delta = upstream
    for i in range(n_layers - 1, -1, -1):
        name = spec.output_activation if i == n_layers - 1 else spec.hidden_activation
        delta = delta * _activate_grad(name, pre[i], acts[i + 1])
        w_grads[i] = acts[i].T @ delta
        b_grads[i] = delta.sum(axis=0)
        if i:
            delta = delta @ params.weights[i].T
    return tuple(w_grads), tuple(b_grads)


@dataclass
class AdamState:
    """First/second moment accumulators plus step counter for one network."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: NetParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
            lr=lr,
            **kw,
        )


def adam_step(params: NetParams, grads, state: AdamState) -> NetParams:
    """One bias-corrected Adam update; mutates ``state``, returns new params."""
    w_grads, b_grads = grads
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    new_w, new_b = [], []
    for i, (w, g) in enumerate(zip(params.weights, w_grads)):
        state.m_w[i] = b1 * state.m_w[i] + (1 - b1) * g
        state.v_w[i] = b2 * state.v_w[i] + (1 - b2) * g**2
        new_w.append(w - state.lr * (state.m_w[i] / c1) / (np.sqrt(state.v_w[i] / c2) + state.eps))
    for i, (b, g) in enumerate(zip(params.biases, b_grads)):
        state.m_b[i] = b1 * state.m_b[i] + (1 - b1) * g
        state.v_b[i] = b2 * state.v_b[i] + (1 - b2) * g**2
        new_b.append(b - state.lr * (state.m_b[i] / c1) / (np.sqrt(state.v_b[i] / c2) + state.eps))
    return NetParams(tuple(new_w), tuple(new_b))


@dataclass(frozen=True)
class InputScaler:
    """Fixed affine whitening applied before the first layer."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "InputScaler":
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(mean, scale)

    @classmethod
    def identity(cls, dim: int) -> "InputScaler":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def train_net(
    spec: NetSpec,
    params: NetParams,
    inputs: np.ndarray,
    upstream_fn,
    steps: int,
    batch_size: int,
    lr: float,
    shuffle_seed: int,
) -> NetParams:
    """Mini-batch Adam loop.

    ``upstream_fn(out, idx)`` maps batch outputs and sample indices to the
    per-sample loss gradient dL/dOutput.  Batches are contiguous slices of a
    reshuffled permutation, so the run is fully determined by the seed.
    """
    m = inputs.shape[0]
    batch_size = min(batch_size, m)
    gen = np.random.Generator(np.random.Philox(key=shuffle_seed))
    state = AdamState.for_params(params, lr=lr)
    perm = gen.permutation(m)
    pos = 0
    for _ in range(steps):
        if pos + batch_size > m:
            perm = gen.permutation(m)
            pos = 0
        idx = perm[pos : pos + batch_size]
        pos += batch_size
        x = inputs[idx]
        out, cache = forward_cached(spec, params, x)
        grads = backward(spec, params, x, upstream_fn(out, idx), cache=cache)
        params = adam_step(params, grads, state)
    return params


# -- parameter file format ---------------------------------------------------
# magic "XNNP", version u32, layer count u32, layer sizes u32 each, then for
# every layer the float64 little-endian weights (row-major) and biases.

XNNP_MAGIC = b"XNNP"
XNNP_VERSION = 1


def save_params(params: NetParams, file: str | Path) -> None:
    sizes = [params.weights[0].shape[0]] + [w.shape[1] for w in params.weights]
    with open(file, "wb") as fh:
        fh.write(XNNP_MAGIC)
        fh.write(struct.pack("<II", XNNP_VERSION, len(params.weights)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(file: str | Path) -> NetParams:
    with open(file, "rb") as fh:
        if fh.read(4) != XNNP_MAGIC:
            raise ValueError("not a network parameter file (bad magic)")
        version, n_layers = struct.unpack("<II", fh.read(8))
        if version != XNNP_VERSION:
            raise ValueError(f"unsupported parameter file version {version}")
        sizes = struct.unpack(f"<{n_layers + 1}I", fh.read(4 * (n_layers + 1)))
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8")
            weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").astype(np.float64))
    return NetParams(tuple(weights), tuple(biases))
