"""Random-network novelty estimator.

A frozen, randomly initialised target MLP and a trainable predictor MLP of
the same shape. The squared prediction error ``||T(s) - P(s)||^2`` is the
intrinsic reward of a state; the predictor is trained online, one state at a
time, so frequently seen regions of the state space become cheap to predict
and stop looking novel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from .mdp import DimensionMismatch, Trajectory

CHECKPOINT_VERSION = 1


@dataclass
class NetworkParams:
    """ReLU MLP; ``weights[l]`` has shape ``(fan_in, fan_out)``. The last layer is linear."""

    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[l], self.layer_sizes[l + 1]):
                raise ValueError(f"layer {l}: weight shape {w.shape} inconsistent with layer sizes")
            if b.shape != (self.layer_sizes[l + 1],):
                raise ValueError(f"layer {l}: bias shape {b.shape} inconsistent with layer sizes")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def sq_norm(self) -> float:
        return float(sum(np.sum(w * w) + np.sum(b * b) for w, b in zip(self.weights, self.biases)))


def init_network(layer_sizes: Sequence[int], rng: np.random.Generator) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    sizes = [int(n) for n in layer_sizes]
    if any(n < 1 for n in sizes):
        raise ValueError("layer sizes must be positive")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return NetworkParams(sizes, weights, biases)


def forward(net: NetworkParams, s: np.ndarray) -> np.ndarray:
    """Evaluate the network on one state (1-D) or a batch (2-D, one state per row)."""
    x = np.asarray(s, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DimensionMismatch(f"network expects input dim {net.input_dim}, got {x.shape[-1]}")
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        x = x @ w + b
        if l < last:
            x = np.maximum(x, 0.0)
    return x


def loss_and_grads(
    net: NetworkParams, x: np.ndarray, target_out: np.ndarray, l2_coeff: float
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """Per-state loss ``||target_out - net(x)||^2 + l2 * ||params||^2`` and its exact gradients."""
    acts = [x]
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w + b
        if l < last:
            a = np.maximum(a, 0.0)
        acts.append(a)
    diff = acts[-1] - target_out
    loss = float(diff @ diff) + l2_coeff * net.sq_norm()
    delta = 2.0 * diff
    gw: List[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    gb: List[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    for l in range(last, -1, -1):
        gw[l] = np.outer(acts[l], delta) + 2.0 * l2_coeff * net.weights[l]
        gb[l] = delta + 2.0 * l2_coeff * net.biases[l]
        if l > 0:
            delta = (net.weights[l] @ delta) * (acts[l] > 0.0)
    return loss, gw, gb


@dataclass
class IntrinsicReward:
    value: float

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError("intrinsic reward must be non-negative")

    def __float__(self) -> float:
        return self.value


@dataclass
class CuriosityModule:
    target: NetworkParams
    predictor: NetworkParams
    learning_rate: float = 1e-3
    l2_coeff: float = 1e-5
    update_count: int = 0
    # Per-dimension affine map [lower, upper] -> [-1, 1] applied before both networks.
    input_lower: Optional[np.ndarray] = None
    input_upper: Optional[np.ndarray] = None
    _scale: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _offset: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.target.layer_sizes != self.predictor.layer_sizes:
            raise ValueError("target and predictor must share an architecture")
        if self.learning_rate < 0 or self.l2_coeff < 0:
            raise ValueError("learning_rate and l2_coeff must be non-negative")
        self.set_normalization(self.input_lower, self.input_upper)

    @property
    def input_dim(self) -> int:
        return self.target.input_dim

    def set_normalization(self, lower, upper) -> None:
        if lower is None or upper is None:
            self.input_lower = self.input_upper = None
            self._scale = self._offset = None
            return
        lo = np.asarray(lower, dtype=np.float64)
        hi = np.asarray(upper, dtype=np.float64)
        if lo.shape != (self.input_dim,) or hi.shape != (self.input_dim,):
            raise DimensionMismatch("normalization bounds must match the input dim")
        width = hi - lo
        # Degenerate dimensions (lower == upper) map to 0.
        scale = np.where(width > 0, 2.0 / np.where(width > 0, width, 1.0), 0.0)
        self.input_lower, self.input_upper = lo, hi
        self._scale = scale
        self._offset = -1.0 - lo * scale
        self._offset = np.where(width > 0, self._offset, 0.0)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"module expects input dim {self.input_dim}, got {x.shape[-1]}")
        if self._scale is None:
            return x
        # States outside the bounds saturate rather than dominate the error.
        return np.clip(x * self._scale + self._offset, -1.0, 1.0)


def init_curiosity(
    input_dim: int,
    hidden_sizes: Sequence[int] = (64, 64),
    output_dim: int = 32,
    rng_seed: int = 0,
    learning_rate: float = 1e-3,
    l2_coeff: float = 1e-5,
    input_lower=None,
    input_upper=None,
) -> CuriosityModule:
    sizes = [int(input_dim), *[int(h) for h in hidden_sizes], int(output_dim)]
    rng = np.random.default_rng(rng_seed)
    target = init_network(sizes, rng)
    predictor = init_network(sizes, rng)
    return CuriosityModule(target, predictor, learning_rate, l2_coeff, 0, input_lower, input_upper)


def intrinsic_reward_state(m: CuriosityModule, s: np.ndarray) -> IntrinsicReward:
    x = m.normalize(s)
    if x.ndim != 1:
        raise DimensionMismatch("expected a single state")
    d = forward(m.target, x) - forward(m.predictor, x)
    return IntrinsicReward(float(d @ d))


def prediction_errors(m: CuriosityModule, states: np.ndarray) -> np.ndarray:
    """Read-only batch evaluation of the per-state squared error."""
    x = m.normalize(np.atleast_2d(states))
    d = forward(m.target, x) - forward(m.predictor, x)
    return np.einsum("ij,ij->i", d, d)


def score_and_update(m: CuriosityModule, traj: Union[Trajectory, np.ndarray]) -> IntrinsicReward:
    """Mean per-state error over the sequence, training the predictor after each state.

    Each state's error is measured with the predictor as it stands before that
    state's own gradient step.
    """
    states = traj.states if isinstance(traj, Trajectory) else np.atleast_2d(traj)
    if states.shape[0] == 0:
        raise ValueError("empty state sequence")
    x_all = np.ascontiguousarray(m.normalize(states))
    pred = m.predictor
    sizes = np.asarray(pred.layer_sizes, dtype=np.int64)
    # Same arithmetic for both networks, so a predictor equal to the target scores exactly 0.
    t_all = _forward_rows(x_all, m.target.flat(), sizes)
    buf = pred.flat()
    total = _online_sgd(x_all, t_all, buf, sizes, float(m.learning_rate), float(m.l2_coeff))
    _unflatten_into(pred, buf)
    m.update_count += int(states.shape[0])
    return IntrinsicReward(total / states.shape[0])


def _unflatten_into(net: NetworkParams, buf: np.ndarray) -> None:
    k = 0
    for w, b in zip(net.weights, net.biases):
        w[...] = buf[k : k + w.size].reshape(w.shape)
        k += w.size
        b[...] = buf[k : k + b.size]
        k += b.size


@njit(cache=True)
def _layout(sizes):
    n_layers = sizes.shape[0] - 1
    offs = np.zeros(n_layers + 1, dtype=np.int64)
    width = sizes[0]
    for l in range(n_layers):
        offs[l + 1] = offs[l] + sizes[l] * sizes[l + 1] + sizes[l + 1]
        width = max(width, sizes[l + 1])
    return offs, width


@njit(cache=True)
def _forward_packed(x, buf, sizes, offs, acts):
    """Forward pass of one row into ``acts`` (one row per layer) from a packed buffer."""
    n_layers = sizes.shape[0] - 1
    for i in range(sizes[0]):
        acts[0, i] = x[i]
    for l in range(n_layers):
        fi, fo = sizes[l], sizes[l + 1]
        w0 = offs[l]
        b0 = w0 + fi * fo
        for j in range(fo):
            acts[l + 1, j] = buf[b0 + j]
        for i in range(fi):
            a = acts[l, i]
            if a != 0.0:
                row = w0 + i * fo
                for j in range(fo):
                    acts[l + 1, j] += a * buf[row + j]
        if l < n_layers - 1:
            for j in range(fo):
                if acts[l + 1, j] < 0.0:
                    acts[l + 1, j] = 0.0


@njit(cache=True)
def _forward_rows(x_all, buf, sizes):
    """Batch forward with exactly the arithmetic the training kernel uses for the predictor."""
    offs, width = _layout(sizes)
    n_layers = sizes.shape[0] - 1
    acts = np.zeros((n_layers + 1, width))
    out = np.empty((x_all.shape[0], sizes[n_layers]))
    for n in range(x_all.shape[0]):
        _forward_packed(x_all[n], buf, sizes, offs, acts)
        for j in range(sizes[n_layers]):
            out[n, j] = acts[n_layers, j]
    return out


@njit(cache=True)
def _online_sgd(x_all, t_all, buf, sizes, lr, l2):
    """Per-state SGD over a packed ``[W0, b0, W1, b1, ...]`` buffer; returns the summed pre-update error."""
    offs, width = _layout(sizes)
    n_layers = sizes.shape[0] - 1
    acts = np.zeros((n_layers + 1, width))
    delta = np.zeros(width)
    back = np.zeros(width)
    decay = 1.0 - 2.0 * lr * l2
    total = 0.0
    for n in range(x_all.shape[0]):
        _forward_packed(x_all[n], buf, sizes, offs, acts)
        err = 0.0
        fo = sizes[n_layers]
        for j in range(fo):
            d = acts[n_layers, j] - t_all[n, j]
            err += d * d
            delta[j] = 2.0 * d
        total += err
        if lr == 0.0:
            continue
        for l in range(n_layers - 1, -1, -1):
            fi, fo = sizes[l], sizes[l + 1]
            w0 = offs[l]
            b0 = w0 + fi * fo
            # Backpropagate through the pre-update weights first.
            if l > 0:
                for i in range(fi):
                    if acts[l, i] > 0.0:
                        row = w0 + i * fo
                        s = 0.0
                        for j in range(fo):
                            s += buf[row + j] * delta[j]
                        back[i] = s
                    else:
                        back[i] = 0.0
            # w <- decay * w - lr * outer(a, delta); decay carries the L2 term
            for i in range(fi):
                a = acts[l, i]
                row = w0 + i * fo
                for j in range(fo):
                    buf[row + j] = decay * buf[row + j] - lr * a * delta[j]
            for j in range(fo):
                buf[b0 + j] = decay * buf[b0 + j] - lr * delta[j]
            if l > 0:
                for i in range(fi):
                    delta[i] = back[i]
    return total


def save_checkpoint(m: CuriosityModule, path: Union[str, Path]) -> None:
    from .io import atomic_write_text

    atomic_write_text(Path(path), json.dumps(to_dict(m)))


def load_checkpoint(path: Union[str, Path]) -> CuriosityModule:
    return from_dict(json.loads(Path(path).read_text()))


def _net_to_dict(net: NetworkParams) -> dict:
    return {
        "layer_sizes": net.layer_sizes,
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> NetworkParams:
    return NetworkParams(
        [int(n) for n in d["layer_sizes"]],
        [np.asarray(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]],
        [np.asarray(b, dtype=np.float64) for b in d["biases"]],
        d.get("activation", "relu"),
    )


def to_dict(m: CuriosityModule) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "target": _net_to_dict(m.target),
        "predictor": _net_to_dict(m.predictor),
        "learning_rate": m.learning_rate,
        "l2_coeff": m.l2_coeff,
        "update_count": m.update_count,
        "input_lower": None if m.input_lower is None else m.input_lower.tolist(),
        "input_upper": None if m.input_upper is None else m.input_upper.tolist(),
    }


def from_dict(d: dict) -> CuriosityModule:
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported curiosity checkpoint version {d.get('version')!r}")
    return CuriosityModule(
        _net_from_dict(d["target"]),
        _net_from_dict(d["predictor"]),
        float(d["learning_rate"]),
        float(d["l2_coeff"]),
        int(d["update_count"]),
        d.get("input_lower"),
        d.get("input_upper"),
    )
