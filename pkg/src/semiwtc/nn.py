"""Minimal dense-network numerical core.

float32 throughout. Layers cache their forward inputs for an explicit
reverse-mode backward pass; no autodiff graph.
"""

from __future__ import annotations

import struct

import numpy as np

DTYPE = np.float32


class NaNGradientError(FloatingPointError):
    pass


class DenseLayer:
    """Affine map y = x W^T + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, scale: float | None = None):
        limit = scale if scale is not None else np.sqrt(6.0 / in_dim)
        self.W = rng.uniform(-limit, limit, size=(out_dim, in_dim)).astype(DTYPE)
        self.b = np.zeros(out_dim, dtype=DTYPE) if bias else None
        self._x = None

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} input features, got {x.shape[1]}")
        self._x = x
        y = x @ self.W.T
        if self.b is not None:
            y = y + self.b
        return y

    def backward(self, grad_out: np.ndarray):
        if self._x is None:
            raise RuntimeError("backward before forward")
        grad_in = grad_out @ self.W
        grad_W = grad_out.T @ self._x
        grad_b = grad_out.sum(axis=0) if self.b is not None else None
        return grad_in, grad_W, grad_b

    def params(self) -> list[np.ndarray]:
        return [self.W] if self.b is None else [self.W, self.b]


class BatchNorm:
    """Per-feature batch normalization with running statistics."""

    def __init__(self, dim: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = np.ones(dim, dtype=DTYPE)
        self.beta = np.zeros(dim, dtype=DTYPE)
        self.running_mean = np.zeros(dim, dtype=DTYPE)
        self.running_var = np.ones(dim, dtype=DTYPE)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch size must be >= 2 in train mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = ((1 - self.momentum) * self.running_mean
                                 + self.momentum * mean).astype(DTYPE)
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * var).astype(DTYPE)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        if train:
            self._cache = (xhat, inv_std)
        return self.gamma * xhat + self.beta

    def backward(self, grad_out: np.ndarray):
        if self._cache is None:
            raise RuntimeError("backward before train-mode forward")
        xhat, inv_std = self._cache
        n = grad_out.shape[0]
        grad_gamma = (grad_out * xhat).sum(axis=0)
        grad_beta = grad_out.sum(axis=0)
        gxhat = grad_out * self.gamma
        grad_in = (inv_std / n) * (n * gxhat - gxhat.sum(axis=0)
                                   - xhat * (gxhat * xhat).sum(axis=0))
        return grad_in.astype(DTYPE), grad_gamma, grad_beta

    def params(self) -> list[np.ndarray]:
        return [self.gamma, self.beta]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def softplus(x: np.ndarray) -> np.ndarray:
    # stable: log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def softplus_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-x))
    return grad_out * sig


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(grad_out: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient wrt logits given gradient wrt probabilities."""
    dot = (grad_out * probs).sum(axis=1, keepdims=True)
    return probs * (grad_out - dot)


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (in-place updates)."""

    def __init__(self, params: list[np.ndarray], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1 - self.beta1 ** self.t
        b2t = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NaNGradientError(f"non-finite gradient for parameter of shape {p.shape}")
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            p -= (self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(p.dtype)


CHECKPOINT_MAGIC = b"SEMIWTC-CKPT1\n"


def save_arrays(path, arrays: list[np.ndarray], header: dict | None = None) -> None:
    """Versioned flat binary: magic, text header, then row-major float32 blocks."""
    header = header or {}
    head_lines = [f"{k}={v}" for k, v in sorted(header.items())]
    head_lines.append("shapes=" + ";".join(",".join(map(str, a.shape)) for a in arrays))
    head = ("\n".join(head_lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=DTYPE).tobytes())


def load_arrays(path) -> tuple[list[np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = {}
        shapes = []
        for line in fh.read(hlen).decode("utf-8").splitlines():
            k, _, v = line.partition("=")
            if k == "shapes":
                shapes = [tuple(int(d) for d in s.split(",") if d) for s in v.split(";") if s]
            else:
                header[k] = v
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 4)
            arrays.append(np.frombuffer(buf, dtype=DTYPE).reshape(shape).copy())
    return arrays, header
