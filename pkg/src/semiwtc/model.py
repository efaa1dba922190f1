"""Residual batch-norm MLP encoder with twin classification heads.

Trunk: D -> 256 (softplus) -> 128 (relu) -> BN -> 64 -> residual add of a
bias-free linear projection of the raw input -> relu -> 32 (relu). The
32-dim embedding feeds two identically-shaped dense+softmax heads, one for
the supervised data stream and one for the pseudo-labeled stream.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .losses import wtc_grad, wtc_loss
from .rng import substream


@dataclass
class RBMLPConfig:
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (256, 128, 64, 32)
    use_residual: bool = True
    use_batchnorm: bool = True
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        if len(self.hidden_dims) != 4 or any(d <= 0 for d in self.hidden_dims):
            raise ValueError("hidden_dims must be four positive widths")
        if self.input_dim <= 0 or self.num_classes <= 0:
            raise ValueError("input_dim and num_classes must be positive")


@dataclass
class ForwardCache:
    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    s: np.ndarray  # pre-activation at the residual join
    a4: np.ndarray
    embedding: np.ndarray
    p_sup: np.ndarray
    p_unsup: np.ndarray


class RBMLPModel:
    def __init__(self, config: RBMLPConfig, seed: int = 0):
        self.config = config
        d = config.input_dim
        h = config.hidden_dims
        rng = substream(seed, "init")
        self.l1 = nn.DenseLayer(d, h[0], rng)
        self.l2 = nn.DenseLayer(h[0], h[1], rng)
        self.bn = nn.BatchNorm(h[1], config.bn_eps, config.bn_momentum) \
            if config.use_batchnorm else None
        self.l3 = nn.DenseLayer(h[1], h[2], rng)
        self.shortcut = nn.DenseLayer(d, h[2], rng, bias=False, scale=0.05) \
            if config.use_residual else None
        self.l4 = nn.DenseLayer(h[2], h[3], rng)
        self.head_sup = nn.DenseLayer(h[3], config.num_classes, rng)
        self.head_unsup = nn.DenseLayer(h[3], config.num_classes, rng)
        self._cache: ForwardCache | None = None

    def params(self) -> list[np.ndarray]:
        out = self.l1.params() + self.l2.params()
        if self.bn is not None:
            out += self.bn.params()
        out += self.l3.params()
        if self.shortcut is not None:
            out += self.shortcut.params()
        out += self.l4.params() + self.head_sup.params() + self.head_unsup.params()
        return out

    def make_optimizer(self, lr: float = 0.001, beta1: float = 0.9,
                       beta2: float = 0.999) -> nn.Adam:
        return nn.Adam(self.params(), lr=lr, beta1=beta1, beta2=beta2)

    def forward(self, x: np.ndarray, train: bool = False):
        """Return (p_sup, p_unsup, embedding) for a batch."""
        x = np.asarray(x, dtype=nn.DTYPE)
        a1 = self.l1.forward(x)
        h1 = nn.softplus(a1)
        a2 = self.l2.forward(h1)
        h2 = nn.relu(a2)
        b = self.bn.forward(h2, train) if self.bn is not None else h2
        a3 = self.l3.forward(b)
        s = a3 + self.shortcut.forward(x) if self.shortcut is not None else a3
        h3 = nn.relu(s)
        a4 = self.l4.forward(h3)
        emb = nn.relu(a4)
        p_sup = nn.softmax(self.head_sup.forward(emb))
        p_unsup = nn.softmax(self.head_unsup.forward(emb))
        if train:
            self._cache = ForwardCache(x, a1, a2, s, a4, emb, p_sup, p_unsup)
        return p_sup, p_unsup, emb

    def backward(self, grad_probs: np.ndarray, branch: str) -> list[np.ndarray]:
        """Gradients for all params() given the loss gradient wrt the selected
        head's probabilities. Inactive-head entries are None."""
        c = self._cache
        if c is None:
            raise RuntimeError("backward before train-mode forward")
        if branch == "sup":
            head, probs = self.head_sup, c.p_sup
        elif branch == "unsup":
            head, probs = self.head_unsup, c.p_unsup
        else:
            raise ValueError(f"unknown branch {branch!r}")

        g_z = nn.softmax_backward(grad_probs, probs)
        g_emb, gW_head, gb_head = head.backward(g_z)
        g_a4 = nn.relu_backward(g_emb, c.a4)
        g_h3, gW4, gb4 = self.l4.backward(g_a4)
        g_s = nn.relu_backward(g_h3, c.s)
        g_b, gW3, gb3 = self.l3.backward(g_s)
        if self.shortcut is not None:
            _, gW_sc, _ = self.shortcut.backward(g_s)
        if self.bn is not None:
            g_h2, g_gamma, g_beta = self.bn.backward(g_b)
        else:
            g_h2 = g_b
        g_a2 = nn.relu_backward(g_h2, c.a2)
        g_h1, gW2, gb2 = self.l2.backward(g_a2)
        g_a1 = nn.softplus_backward(g_h1, c.a1)
        _, gW1, gb1 = self.l1.backward(g_a1)

        grads: list = [gW1, gb1, gW2, gb2]
        if self.bn is not None:
            grads += [g_gamma, g_beta]
        grads += [gW3, gb3]
        if self.shortcut is not None:
            grads += [gW_sc]
        grads += [gW4, gb4]
        if branch == "sup":
            grads += [gW_head, gb_head, None, None]
        else:
            grads += [None, None, gW_head, gb_head]
        return grads

    def train_step(self, x: np.ndarray, targets: np.ndarray, branch: str,
                   delta, alpha: float, optimizer: nn.Adam) -> float:
        """One forward/backward/update through the selected head. Returns the loss."""
        p_sup, p_unsup, _ = self.forward(x, train=True)
        probs = p_sup if branch == "sup" else p_unsup
        loss = wtc_loss(probs, targets, delta, alpha)
        if not np.isfinite(loss):
            raise nn.NaNGradientError(
                f"non-finite loss {loss} on batch of {len(x)} ({branch} branch)")
        grads = self.backward(wtc_grad(probs, targets, delta, alpha), branch)
        optimizer.step(grads)
        return loss

    def snapshot(self) -> "RBMLPModel":
        clone = copy.deepcopy(self)
        clone._cache = None
        return clone

    # checkpoint io -------------------------------------------------------

    def _state_arrays(self) -> list[np.ndarray]:
        arrays = self.params()
        if self.bn is not None:
            arrays = arrays + [self.bn.running_mean, self.bn.running_var]
        return arrays

    def save(self, path) -> None:
        cfg = self.config
        header = {
            "input_dim": cfg.input_dim,
            "num_classes": cfg.num_classes,
            "hidden_dims": ",".join(map(str, cfg.hidden_dims)),
            "use_residual": int(cfg.use_residual),
            "use_batchnorm": int(cfg.use_batchnorm),
        }
        nn.save_arrays(path, self._state_arrays(), header)

    @classmethod
    def load(cls, path) -> "RBMLPModel":
        arrays, header = nn.load_arrays(path)
        config = RBMLPConfig(
            input_dim=int(header["input_dim"]),
            num_classes=int(header["num_classes"]),
            hidden_dims=tuple(int(d) for d in header["hidden_dims"].split(",")),
            use_residual=bool(int(header["use_residual"])),
            use_batchnorm=bool(int(header["use_batchnorm"])),
        )
        model = cls(config, seed=0)
        targets = model._state_arrays()
        if len(targets) != len(arrays):
            raise ValueError(f"{path}: checkpoint has {len(arrays)} arrays, "
                             f"model needs {len(targets)}")
        for dst, src in zip(targets, arrays):
            dst[...] = src
        return model
