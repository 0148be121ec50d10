"""Small dense networks in plain numpy.

Hidden layers are ``affine -> batch norm -> ReLU``; the last layer is affine
only. Backward is written by hand and is exact for the traced computation,
batch-statistics terms included, so any differentiable scalar loss on the
outputs can be pushed through it. Everything runs in float64.

Checkpoint layout (little-endian, version 1)::

    magic      8 bytes   b"MAPSNET\\0"
    version    uint32    1
    n_sizes    uint32    number of entries in ``sizes``
    sizes      uint32 x n_sizes   (input, hidden..., output)
    payload    float64, in this order:
                 for each layer l: weight (in x out, row-major), bias (out)
                 for each hidden layer h: gamma, beta, running_mean, running_var

Load(save(p)) reproduces every value bit for bit.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BN_MOMENTUM = 0.9
BN_EPS = 1e-5
# eval-mode products run in fixed-height blocks: BLAS picks kernels (and so
# rounding) by matrix shape, and a row's output must not depend on its batch
EVAL_BLOCK = 8

CKPT_MAGIC = b"MAPSNET\0"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class MlpParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gammas: list[np.ndarray]
    betas: list[np.ndarray]
    running_means: list[np.ndarray]
    running_vars: list[np.ndarray]

    @property
    def n_hidden(self) -> int:
        return len(self.sizes) - 2

    def trainable(self) -> dict[str, np.ndarray]:
        """Named views of every trainable array, in checkpoint order."""
        out = {}
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{l}.weight"] = W
            out[f"layer{l}.bias"] = b
        for h, (g, be) in enumerate(zip(self.gammas, self.betas)):
            out[f"bn{h}.gamma"] = g
            out[f"bn{h}.beta"] = be
        return out

    def arrays(self) -> list[np.ndarray]:
        """All arrays (trainable and running stats) in checkpoint order."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        for g, be, m, v in zip(self.gammas, self.betas, self.running_means, self.running_vars):
            out += [g, be, m, v]
        return out

    def copy(self) -> "MlpParams":
        cp = lambda xs: [x.copy() for x in xs]  # noqa: E731
        return MlpParams(
            tuple(self.sizes),
            cp(self.weights),
            cp(self.biases),
            cp(self.gammas),
            cp(self.betas),
            cp(self.running_means),
            cp(self.running_vars),
        )

    def equals(self, other: "MlpParams") -> bool:
        return tuple(self.sizes) == tuple(other.sizes) and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class ForwardTrace:
    mode: str
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each affine layer
    xhat: list[np.ndarray] = field(default_factory=list)
    inv_std: list[np.ndarray] = field(default_factory=list)
    batch_mean: list[np.ndarray] = field(default_factory=list)
    batch_var: list[np.ndarray] = field(default_factory=list)
    active: list[np.ndarray] = field(default_factory=list)  # ReLU masks


def _zeros_params(sizes) -> MlpParams:
    sizes = tuple(int(s) for s in sizes)
    pairs = list(zip(sizes[:-1], sizes[1:]))
    hidden = sizes[1:-1]
    return MlpParams(
        sizes,
        [np.zeros((i, o)) for i, o in pairs],
        [np.zeros(o) for _, o in pairs],
        [np.ones(h) for h in hidden],
        [np.zeros(h) for h in hidden],
        [np.zeros(h) for h in hidden],
        [np.ones(h) for h in hidden],
    )


def init_mlp(sizes, rng: np.random.Generator | None = None, zero: bool = False) -> MlpParams:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases, identity BN."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"invalid layer sizes {sizes}")
    params = _zeros_params(sizes)
    if zero:
        return params
    rng = rng if rng is not None else np.random.default_rng()
    for W in params.weights:
        limit = np.sqrt(6.0 / W.shape[0])
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return params


def _blocked_matmul(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    m = x.shape[0]
    pad = -m % EVAL_BLOCK
    if pad:
        x = np.vstack([x, np.zeros((pad, x.shape[1]))])
    out = np.empty((x.shape[0], W.shape[1]))
    for s in range(0, x.shape[0], EVAL_BLOCK):
        np.matmul(x[s : s + EVAL_BLOCK], W, out=out[s : s + EVAL_BLOCK])
    return out[:m]


def mlp_forward(params: MlpParams, batch, mode: str = "train", update_stats: bool = True):
    """Forward pass. Returns ``(outputs, trace)``.

    Train mode normalises with batch statistics (biased variance) and, unless
    ``update_stats`` is False, folds them into the running averages. Eval mode
    uses the running averages only, so each row is processed independently.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.sizes[0]:
        raise ValueError(f"batch shape {x.shape} does not match input width {params.sizes[0]}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ValueError("train-mode batch norm needs a batch of at least 2 rows")

    trace = ForwardTrace(mode)
    if not train:
        # running stats are constants here, so BN folds into the affine map
        h = x
        for l in range(params.n_hidden):
            scale = params.gammas[l] / np.sqrt(params.running_vars[l] + BN_EPS)
            shift = (params.biases[l] - params.running_means[l]) * scale + params.betas[l]
            h = np.maximum(_blocked_matmul(h, params.weights[l] * scale) + shift, 0.0)
        return _blocked_matmul(h, params.weights[-1]) + params.biases[-1], trace

    h = x
    for l in range(params.n_hidden):
        trace.inputs.append(h)
        z = h @ params.weights[l]
        z += params.biases[l]
        mu = z.mean(axis=0)
        z -= mu
        var = np.einsum("ij,ij->j", z, z) / z.shape[0]
        if update_stats:
            params.running_means[l] *= BN_MOMENTUM
            params.running_means[l] += (1 - BN_MOMENTUM) * mu
            params.running_vars[l] *= BN_MOMENTUM
            params.running_vars[l] += (1 - BN_MOMENTUM) * var
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = z
        xhat *= inv
        y = xhat * params.gammas[l]
        y += params.betas[l]
        active = y > 0
        h = np.maximum(y, 0.0, out=y)
        trace.xhat.append(xhat)
        trace.inv_std.append(inv)
        trace.batch_mean.append(mu)
        trace.batch_var.append(var)
        trace.active.append(active)
    trace.inputs.append(h)
    out = h @ params.weights[-1] + params.biases[-1]
    return out, trace


def mlp_backward(params: MlpParams, trace: ForwardTrace, upstream) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * outputs)`` w.r.t. every trainable array.

    Keys match :meth:`MlpParams.trainable`.
    """
    if trace.mode != "train":
        raise ValueError("backward needs a train-mode trace")
    g = np.asarray(upstream, dtype=np.float64)
    B = trace.inputs[0].shape[0]
    if g.shape != (B, params.sizes[-1]):
        raise ValueError(f"upstream gradient shape {g.shape} != {(B, params.sizes[-1])}")

    L = len(params.weights) - 1
    grads = {
        f"layer{L}.weight": trace.inputs[L].T @ g,
        f"layer{L}.bias": g.sum(axis=0),
    }
    g = g @ params.weights[L].T
    for l in reversed(range(params.n_hidden)):
        g *= trace.active[l]
        xhat = trace.xhat[l]
        grads[f"bn{l}.gamma"] = (g * xhat).sum(axis=0)
        grads[f"bn{l}.beta"] = g.sum(axis=0)
        dxhat = g * params.gammas[l]
        dz = trace.inv_std[l] / B * (
            B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        grads[f"layer{l}.weight"] = trace.inputs[l].T @ dz
        grads[f"layer{l}.bias"] = dz.sum(axis=0)
        g = dz @ params.weights[l].T
    return {name: grads[name] for name in params.trainable()}


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        t = params.trainable()
        return cls({k: np.zeros_like(a) for k, a in t.items()}, {k: np.zeros_like(a) for k, a in t.items()})


def adam_step(params: MlpParams, grads, state: AdamState, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    targets = params.trainable()
    if set(grads) != set(targets):
        raise ValueError("gradient names do not match parameters")
    for name, g in grads.items():
        if g.shape != targets[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {targets[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    state.step_count += 1
    c1 = 1.0 - beta1**state.step_count
    c2 = 1.0 - beta2**state.step_count
    for name, p in targets.items():
        g = grads[name]
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += eps
        p -= (lr / c1) * m / denom
    return params, state


def snapshot(params: MlpParams) -> MlpParams:
    return params.copy()


def params_to_bytes(params: MlpParams) -> bytes:
    sizes = tuple(params.sizes)
    head = CKPT_MAGIC + struct.pack(f"<II{len(sizes)}I", CKPT_VERSION, len(sizes), *sizes)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())
    return head + body


def params_from_bytes(data: bytes) -> MlpParams:
    if data[:8] != CKPT_MAGIC:
        raise CheckpointError("not a network checkpoint (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 8)
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if not 2 <= n <= 64:
            raise CheckpointError(f"implausible layer count {n}")
        sizes = struct.unpack_from(f"<{n}I", data, 16)
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint header") from exc
    params = _zeros_params(sizes)
    offset = 16 + 4 * n
    expected = offset + 8 * sum(a.size for a in params.arrays())
    if len(data) != expected:
        raise CheckpointError(f"checkpoint is {len(data)} bytes, expected {expected}")
    for a in params.arrays():
        a[...] = np.frombuffer(data, dtype="<f8", count=a.size, offset=offset).reshape(a.shape)
        offset += 8 * a.size
    return params


def save_params(params: MlpParams, path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path) -> MlpParams:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return params_from_bytes(data)
