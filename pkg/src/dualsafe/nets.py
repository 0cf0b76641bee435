"""Dense feed-forward networks with hand-written reverse-mode gradients.

Everything runs in float64 numpy. Actors are tanh-output networks (bounded
actions), critics are identity-output networks with a scalar output. The
binary checkpoint format written here is bit-exact: saving and reloading a
network reproduces every parameter byte for byte.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "identity")

CHECKPOINT_MAGIC = b"DSAFE1\n"


class DivergenceError(RuntimeError):
    """A training update produced non-finite numbers."""


class CheckpointError(ValueError):
    """Malformed, truncated, or shape-mismatched checkpoint file."""


@dataclass
class Mlp:
    """A fully-connected network: weights[l] has shape (fan_out, fan_in)."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "tanh"
    hidden_activation: str = "tanh"

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            output_activation=self.output_activation,
            hidden_activation=self.hidden_activation,
        )

    def param_arrays(self) -> list[np.ndarray]:
        """All parameter arrays, weights before biases, layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class ForwardCache:
    """Per-layer activations from one forward pass (input first, output last)."""

    layer_sizes: tuple[int, ...]
    activations: list[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]


def mlp_init(layer_sizes, output_activation: str = "tanh", seed: int = 0) -> Mlp:
    """Create a network with uniform ±1/sqrt(fan_in) weights and zero biases.

    Identical (layer_sizes, seed) pairs produce bit-identical parameters.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output sizes, got {sizes}")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    if output_activation not in ACTIVATIONS:
        raise ValueError(f"unknown output activation {output_activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, output_activation=output_activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    return z


def mlp_forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a (batch, in_dim) matrix.

    Returns the (batch, out_dim) output and the activation cache needed by
    mlp_backward.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"expected input shape (batch, {net.in_dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    activations = [x]
    h = x
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        kind = net.output_activation if l == last else net.hidden_activation
        h = _activate(z, kind)
        activations.append(h)
    return h, ForwardCache(net.layer_sizes, activations)


def mlp_backward(
    net: Mlp, cache: ForwardCache, output_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact gradients of sum(output * output_grad) w.r.t. parameters and input.

    Returns ([(dW, db) per layer], input_grad). The cache must come from a
    forward pass of the same network.
    """
    if cache.layer_sizes != net.layer_sizes:
        raise ValueError("cache does not match network architecture")
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != cache.activations[-1].shape:
        raise ValueError(
            f"output_grad shape {output_grad.shape} does not match "
            f"output shape {cache.activations[-1].shape}"
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * net.n_layers
    d = output_grad
    last = net.n_layers - 1
    for l in range(last, -1, -1):
        h_out = cache.activations[l + 1]
        kind = net.output_activation if l == last else net.hidden_activation
        dz = d * (1.0 - h_out * h_out) if kind == "tanh" else d
        h_in = cache.activations[l]
        grads[l] = (dz.T @ h_in, dz.sum(axis=0))
        d = dz @ net.weights[l]
    return grads, d


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring one network's parameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_init(net: Mlp, lr: float = 1e-3) -> AdamState:
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    params = net.param_arrays()
    return AdamState(
        lr=lr,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(net: Mlp, grads, state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected moment descent step, in place.

    grads is the [(dW, db) per layer] list from mlp_backward. Non-finite
    gradients abort the step with DivergenceError.
    """
    flat = []
    for dw, db in grads:
        flat.append(dw)
        flat.append(db)
    params = net.param_arrays()
    if len(flat) != len(params):
        raise ValueError("gradient structure does not match network")
    for g, p in zip(flat, params):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for g, p, m, v in zip(flat, params, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return net, state


def gradient_check(
    net: Mlp, x: np.ndarray, eps: float = 1e-5, corrupt_layer: int | None = None
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The checked scalar is sum(forward(x)). corrupt_layer flips the sign of
    that layer's analytic weight gradient, for verifying the checker itself
    catches broken backward passes.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    out, cache = mlp_forward(net, x)
    grads, _ = mlp_backward(net, cache, np.ones_like(out))
    if corrupt_layer is not None:
        dw, db = grads[corrupt_layer]
        grads[corrupt_layer] = (-dw, db)
    analytic = []
    for dw, db in grads:
        analytic.append(dw)
        analytic.append(db)
    worst = 0.0
    for p, a in zip(net.param_arrays(), analytic):
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = mlp_forward(net, x)[0].sum()
            flat[i] = orig - eps
            f_minus = mlp_forward(net, x)[0].sum()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint format: magic line, then per network one ASCII header line
# "<name> <s0,s1,...> <tanh|identity>\n" followed by that network's raw
# little-endian float64 data (per layer: weights row-major, then biases);
# finally an optional ASCII footer line "key=value key=value ...".
# ---------------------------------------------------------------------------


def _net_nbytes(sizes: tuple[int, ...]) -> int:
    n = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        n += fan_out * fan_in + fan_out
    return n * 8


def save_networks(path, nets: dict[str, Mlp], footer: dict | None = None) -> None:
    """Write networks (and an optional footer line) atomically to path."""
    chunks = [CHECKPOINT_MAGIC]
    for name, net in nets.items():
        if " " in name or "\n" in name or "=" in name:
            raise ValueError(f"invalid network name {name!r}")
        sizes = ",".join(str(s) for s in net.layer_sizes)
        chunks.append(f"{name} {sizes} {net.output_activation}\n".encode("ascii"))
        for w, b in zip(net.weights, net.biases):
            chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if footer is not None:
        line = " ".join(f"{k}={_fmt_footer_value(v)}" for k, v in footer.items())
        chunks.append((line + "\n").encode("ascii"))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_footer_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _read_line(data: bytes, pos: int) -> tuple[str, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise CheckpointError("truncated checkpoint: unterminated header line")
    return data[pos:end].decode("ascii", errors="replace"), end + 1


def load_networks(path) -> tuple[dict[str, Mlp], dict[str, float] | None]:
    """Read a checkpoint; returns ({name: Mlp}, footer dict or None)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    nets: dict[str, Mlp] = {}
    footer = None
    while pos < len(data):
        line, pos = _read_line(data, pos)
        if "=" in line.split(" ", 1)[0]:
            footer = _parse_footer(line)
            if pos != len(data):
                raise CheckpointError("trailing data after checkpoint footer")
            break
        parts = line.split(" ")
        if len(parts) != 3:
            raise CheckpointError(f"malformed network header {line!r}")
        name, sizes_csv, activation = parts
        if activation not in ACTIVATIONS:
            raise CheckpointError(f"unknown activation {activation!r} in header")
        try:
            sizes = tuple(int(s) for s in sizes_csv.split(","))
        except ValueError as exc:
            raise CheckpointError(f"malformed layer sizes {sizes_csv!r}") from exc
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise CheckpointError(f"invalid layer sizes {sizes}")
        nbytes = _net_nbytes(sizes)
        if pos + nbytes > len(data):
            raise CheckpointError(f"truncated checkpoint: network {name!r} incomplete")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            wn = fan_out * fan_in * 8
            w = np.frombuffer(data[pos : pos + wn], dtype="<f8").reshape(fan_out, fan_in)
            pos += wn
            b = np.frombuffer(data[pos : pos + fan_out * 8], dtype="<f8")
            pos += fan_out * 8
            weights.append(w.astype(np.float64))
            biases.append(b.astype(np.float64))
        nets[name] = Mlp(sizes, weights, biases, output_activation=activation)
    return nets, footer


def _parse_footer(line: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in line.split(" "):
        if not item:
            continue
        key, _, value = item.partition("=")
        if not key or not value:
            raise CheckpointError(f"malformed footer item {item!r}")
        out[key] = float(value)
    return out
