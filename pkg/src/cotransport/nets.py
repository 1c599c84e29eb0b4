"""Feed-forward network core with exact analytic gradients.

Fixed topology: an ELU MLP with three hidden layers and one of three heads
(diagonal-Gaussian policy with a state-independent log-std, scalar value,
3-output regression).  Everything is plain numpy; backward passes are exact
reverse-mode and are validated against finite differences in the tests.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0
LOG_2PI = float(np.log(2.0 * np.pi))

HEADS = ("gaussian_policy", "scalar_value", "regression_3")


@dataclass
class Mlp:
    """Network parameters; weights[i] has shape (in_dim, out_dim)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str
    log_std: np.ndarray | None = None   # (action_dim,) for gaussian_policy

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.head, None if self.log_std is None else self.log_std.copy())

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_std: np.ndarray | None = None


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[:shape[0], :shape[1]]


def init_mlp(rng: np.random.Generator, input_dim: int, hidden: tuple[int, ...],
             head: str, output_dim: int | None = None,
             log_std_init: float = -0.5, output_gain: float = 0.01) -> Mlp:
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}")
    if output_dim is None:
        output_dim = {"scalar_value": 1, "regression_3": 3}.get(head)
    if output_dim is None:
        raise ValueError("gaussian_policy needs an explicit output_dim")
    sizes = [input_dim, *hidden, output_dim]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        gain = output_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        weights.append(_orthogonal(rng, (sizes[i], sizes[i + 1]), gain))
        biases.append(np.zeros(sizes[i + 1]))
    log_std = np.full(output_dim, log_std_init) if head == "gaussian_policy" else None
    return Mlp(weights, biases, head, log_std)


def _elu(z):
    return np.maximum(z, 0.0) + np.expm1(np.minimum(z, 0.0))


def _elu_grad(z, activated):
    # derivative: 1 for z > 0, exp(z) = activated + 1 otherwise
    return np.minimum(activated + 1.0, 1.0)


def forward(net: Mlp, x: np.ndarray):
    """Forward pass; returns (output, cache) with cache usable by backward.

    x is (batch, input_dim) or (input_dim,).
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != network dim {net.input_dim}")
    inputs, pre, post = [x], [], []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = _elu(z)
            post.append(h)
            inputs.append(h)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, {"inputs": inputs, "pre": pre, "post": post, "squeeze": squeeze}


def backward(net: Mlp, cache: dict, output_grad: np.ndarray):
    """Exact reverse pass; returns (Grads, input_gradient)."""
    g = np.asarray(output_grad, dtype=float)
    if cache["squeeze"] and g.ndim == 1:
        g = g[None, :]
    if g.shape != cache["pre"][-1].shape:
        raise ValueError("output_grad shape does not match cached forward pass")
    wgrads = [None] * len(net.weights)
    bgrads = [None] * len(net.biases)
    last = len(net.weights) - 1
    for i in range(last, -1, -1):
        if i < last:
            g = g * _elu_grad(cache["pre"][i], cache["post"][i])
        wgrads[i] = cache["inputs"][i].T @ g
        bgrads[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    gin = g[0] if cache["squeeze"] else g
    return Grads(wgrads, bgrads, None), gin


# ---------------------------------------------------------------------------
# Diagonal Gaussian head
# ---------------------------------------------------------------------------

def gaussian_sample(mean, log_std, rng: np.random.Generator):
    std = np.exp(np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))
    return mean + std * rng.standard_normal(np.shape(mean))


def gaussian_log_prob(mean, log_std, action):
    """Log density per sample; sums over the action dimension."""
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    z = (np.asarray(action) - np.asarray(mean)) / np.exp(log_std)
    return -0.5 * np.sum(z * z + 2.0 * log_std + LOG_2PI, axis=-1)


def gaussian_log_prob_grads(mean, log_std, action):
    """(d logp / d mean, d logp / d log_std) for each sample."""
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    var = np.exp(2.0 * log_std)
    diff = np.asarray(action) - np.asarray(mean)
    dmean = diff / var
    dlog_std = diff * diff / var - 1.0
    return dmean, dlog_std


def gaussian_entropy(log_std):
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    return np.sum(log_std + 0.5 * (1.0 + LOG_2PI))


def gaussian_kl(p_mean, p_log_std, q_mean, q_log_std):
    """KL(p || q) for diagonal Gaussians, summed over dimensions."""
    p_log_std = np.clip(p_log_std, LOG_STD_MIN, LOG_STD_MAX)
    q_log_std = np.clip(q_log_std, LOG_STD_MIN, LOG_STD_MAX)
    p_var = np.exp(2.0 * np.asarray(p_log_std))
    q_var = np.exp(2.0 * np.asarray(q_log_std))
    diff = np.asarray(p_mean) - np.asarray(q_mean)
    per_dim = q_log_std - p_log_std + (p_var + diff * diff) / (2.0 * q_var) - 0.5
    return np.sum(per_dim, axis=-1)


def gaussian_kl_grads(p_mean, p_log_std, q_mean, q_log_std):
    """Gradients of KL(p || q) w.r.t. the p parameters."""
    p_log_std = np.clip(p_log_std, LOG_STD_MIN, LOG_STD_MAX)
    q_log_std = np.clip(q_log_std, LOG_STD_MIN, LOG_STD_MAX)
    p_var = np.exp(2.0 * np.asarray(p_log_std))
    q_var = np.exp(2.0 * np.asarray(q_log_std))
    diff = np.asarray(p_mean) - np.asarray(q_mean)
    dmean = diff / q_var
    dlog_std = p_var / q_var - 1.0
    return dmean, dlog_std


# ---------------------------------------------------------------------------
# Adaptive-moment optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    m_s: np.ndarray | None
    v_s: np.ndarray | None
    step: int = 0
    learning_rate: float = 3.0e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.0e-8


def adam_init(net: Mlp, learning_rate: float = 3.0e-4) -> AdamState:
    zw = [np.zeros_like(w) for w in net.weights]
    zb = [np.zeros_like(b) for b in net.biases]
    zs = None if net.log_std is None else np.zeros_like(net.log_std)
    return AdamState([z.copy() for z in zw], [z.copy() for z in zw],
                     [z.copy() for z in zb], [z.copy() for z in zb],
                     zs, None if zs is None else zs.copy(),
                     learning_rate=learning_rate)


def _adam_update(p, g, m, v, state: AdamState, corr1, corr2):
    m *= state.beta1
    m += (1 - state.beta1) * g
    v *= state.beta2
    v += (1 - state.beta2) * g * g
    return p - state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)


def optimizer_step(net: Mlp, grads: Grads, state: AdamState) -> None:
    """In-place adaptive-moment update with bias correction."""
    for arrs in (grads.weights, grads.biases):
        for g in arrs:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient, max |g| = {np.abs(g).max()}")
    if grads.log_std is not None and not np.all(np.isfinite(grads.log_std)):
        raise FloatingPointError("non-finite log_std gradient")
    state.step += 1
    corr1 = 1 - state.beta1 ** state.step
    corr2 = 1 - state.beta2 ** state.step
    for i in range(len(net.weights)):
        net.weights[i] = _adam_update(net.weights[i], grads.weights[i],
                                      state.m_w[i], state.v_w[i], state, corr1, corr2)
        net.biases[i] = _adam_update(net.biases[i], grads.biases[i],
                                     state.m_b[i], state.v_b[i], state, corr1, corr2)
    if grads.log_std is not None and net.log_std is not None:
        net.log_std = np.clip(
            _adam_update(net.log_std, grads.log_std, state.m_s, state.v_s,
                         state, corr1, corr2),
            LOG_STD_MIN, LOG_STD_MAX)


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest + one little-endian float32 blob
# ---------------------------------------------------------------------------

def _param_items(net: Mlp):
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        yield f"w{i}", w
        yield f"b{i}", b
    if net.log_std is not None:
        yield "log_std", net.log_std


def save_net(net: Mlp, directory: str | Path, name: str,
             metadata: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for pname, arr in _param_items(net):
        a32 = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": pname, "shape": list(arr.shape),
                        "offset": offset, "size": int(a32.size)})
        chunks.append(a32.tobytes())
        offset += a32.size
    manifest = {
        "format": "cotransport-net-v1",
        "head": net.head,
        "dtype": "<f4",
        "params": entries,
        "metadata": metadata or {},
    }
    with open(directory / f"{name}.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(directory / f"{name}.bin", "wb") as fh:
        fh.write(b"".join(chunks))


def load_net(directory: str | Path, name: str) -> tuple[Mlp, dict]:
    directory = Path(directory)
    with open(directory / f"{name}.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "cotransport-net-v1":
        raise ValueError("unrecognized checkpoint format")
    blob = np.fromfile(directory / f"{name}.bin", dtype="<f4")
    params: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        chunk = blob[entry["offset"]:entry["offset"] + entry["size"]]
        params[entry["name"]] = chunk.reshape(entry["shape"]).astype(float)
    weights, biases = [], []
    for i in range(sum(1 for k in params if k.startswith("w"))):
        weights.append(params[f"w{i}"])
        biases.append(params[f"b{i}"])
    net = Mlp(weights, biases, manifest["head"], params.get("log_std"))
    return net, manifest["metadata"]
