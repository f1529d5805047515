"""From-scratch dense network core for the Q-agents: no ML framework.

Provides the dueling MLP (trunk of dense+batchnorm+ReLU layers with
dropout, value/advantage heads), manual backprop for the importance-
weighted squared TD loss, a bias-corrected Adam optimizer, and a
bit-exact npz checkpoint format.

Everything is float64. Forward modes:
- "train":  batch statistics + dropout; updates running statistics.
- "eval":   running statistics, no dropout, no rng consumption.
- "frozen": like eval but caches intermediates so gradients can be taken
            with batch norm treated as a fixed affine map (used by the
            finite-difference gradient checks).
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Dense:
    """y = x W + b with He-uniform fan-in initialization."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        limit = np.sqrt(6.0 / n_in)
        self.w = rng.uniform(-limit, limit, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout: np.ndarray):
        dw = self._x.T @ dout
        db = dout.sum(axis=0)
        dx = dout @ self.w.T
        return dx, dw, db


class BatchNorm:
    """Per-feature batch normalization with learned scale/shift.

    Normalization uses biased batch variance; running statistics follow
    new = (1 - momentum) * old + momentum * batch.
    """

    def __init__(self, n_features: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.gamma = np.ones(n_features)
        self.beta = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.momentum = momentum
        self.eps = eps
        self._cache = None

    def forward(self, x: np.ndarray, mode: str) -> np.ndarray:
        if mode == "train":
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            std = np.sqrt(var + self.eps)
            xhat = (x - mu) / std
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mu
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
            self._cache = ("train", xhat, std)
        else:
            std = np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) / std
            self._cache = ("frozen", xhat, std)
        return self.gamma * xhat + self.beta

    def backward(self, dout: np.ndarray):
        kind, xhat, std = self._cache
        dgamma = (dout * xhat).sum(axis=0)
        dbeta = dout.sum(axis=0)
        dxhat = dout * self.gamma
        if kind == "frozen":
            return dxhat / std, dgamma, dbeta
        n = dout.shape[0]
        # full train-mode backward through the batch statistics
        dvar = (dxhat * xhat * std).sum(axis=0) * (-0.5) / std**3
        dmu = -(dxhat / std).sum(axis=0) + dvar * (-2.0 / n) * (xhat * std).sum(axis=0)
        dx = dxhat / std + dvar * 2.0 * (xhat * std) / n + dmu / n
        return dx, dgamma, dbeta


class DuelingQNetwork:
    """Dueling MLP: trunk of dense+BN+ReLU(+dropout) layers, V and A heads.

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a').
    """

    def __init__(
        self,
        n_inputs: int = 8,
        hidden: tuple[int, ...] = (512, 512, 256),
        n_actions: int = 64,
        dropout_rate: float = 0.15,
        rng: Optional[np.random.Generator] = None,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.n_actions = n_actions
        self.dropout_rate = dropout_rate
        self.trunk: list[Dense] = []
        self.norms: list[BatchNorm] = []
        widths = [n_inputs, *hidden]
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            self.trunk.append(Dense(n_in, n_out, rng))
            self.norms.append(BatchNorm(n_out))
        self.value_head = Dense(widths[-1], 1, rng)
        self.adv_head = Dense(widths[-1], n_actions, rng)
        self._cache = None

    @property
    def architecture(self) -> tuple:
        return (self.n_inputs, self.hidden, self.n_actions)

    # -- forward / backward -------------------------------------------------

    def forward(
        self,
        x: np.ndarray,
        mode: str = "eval",
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        if mode not in ("train", "eval", "frozen"):
            raise ValueError(f"unknown mode {mode!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ValueError(f"expected (batch, {self.n_inputs}) input, got {x.shape}")
        if mode == "train" and x.shape[0] < 2:
            raise ValueError("train mode needs batch >= 2 for batch statistics")
        relu_masks = []
        drop_masks = []
        h = x
        for dense, norm in zip(self.trunk, self.norms):
            z = dense.forward(h)
            y = norm.forward(z, "train" if mode == "train" else "frozen")
            mask = y > 0
            h = y * mask
            relu_masks.append(mask)
            if mode == "train" and self.dropout_rate > 0.0:
                if rng is None:
                    raise ValueError("train-mode forward with dropout needs an rng")
                keep = 1.0 - self.dropout_rate
                dmask = (rng.random(h.shape) < keep) / keep
                h = h * dmask
                drop_masks.append(dmask)
            else:
                drop_masks.append(None)
        v = self.value_head.forward(h)
        adv = self.adv_head.forward(h)
        q = v + adv - adv.mean(axis=1, keepdims=True)
        self._cache = (mode, relu_masks, drop_masks, q)
        return q

    def backward(self, action_indices: np.ndarray, targets: np.ndarray, is_weights: np.ndarray):
        """Gradients of (1/B) sum_j w_j (y_j - Q_j[a_j])^2 after a train/frozen forward.

        Returns (grads dict, per-sample signed TD errors y_j - Q_j[a_j]).
        """
        if self._cache is None:
            raise RuntimeError("backward requires a prior forward")
        mode, relu_masks, drop_masks, q = self._cache
        if mode == "eval":
            raise RuntimeError("backward requires a train or frozen forward")
        batch = q.shape[0]
        actions = np.asarray(action_indices, dtype=np.int64)
        taken = q[np.arange(batch), actions]
        td = np.asarray(targets, dtype=np.float64) - taken
        dq = np.zeros_like(q)
        dq[np.arange(batch), actions] = (2.0 / batch) * np.asarray(is_weights) * (-td)

        grads = {}
        dv = dq.sum(axis=1, keepdims=True)
        dadv = dq - dq.mean(axis=1, keepdims=True)
        dh_v, grads["value_head.w"], grads["value_head.b"] = self.value_head.backward(dv)
        dh_a, grads["adv_head.w"], grads["adv_head.b"] = self.adv_head.backward(dadv)
        dh = dh_v + dh_a
        for i in reversed(range(len(self.trunk))):
            if drop_masks[i] is not None:
                dh = dh * drop_masks[i]
            dy = dh * relu_masks[i]
            dz, dgamma, dbeta = self.norms[i].backward(dy)
            grads[f"norm{i}.gamma"] = dgamma
            grads[f"norm{i}.beta"] = dbeta
            dh, grads[f"trunk{i}.w"], grads[f"trunk{i}.b"] = self.trunk[i].backward(dz)
        return grads, td

    # -- parameter access ----------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors, keyed consistently with backward()'s grads."""
        params = {}
        for i, (dense, norm) in enumerate(zip(self.trunk, self.norms)):
            params[f"trunk{i}.w"] = dense.w
            params[f"trunk{i}.b"] = dense.b
            params[f"norm{i}.gamma"] = norm.gamma
            params[f"norm{i}.beta"] = norm.beta
        params["value_head.w"] = self.value_head.w
        params["value_head.b"] = self.value_head.b
        params["adv_head.w"] = self.adv_head.w
        params["adv_head.b"] = self.adv_head.b
        return params

    def set_parameters(self, params: dict[str, np.ndarray]):
        own = self.parameters()
        for name, arr in params.items():
            if own[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}")
            own[name][...] = arr

    def running_stats(self) -> dict[str, np.ndarray]:
        stats = {}
        for i, norm in enumerate(self.norms):
            stats[f"norm{i}.running_mean"] = norm.running_mean
            stats[f"norm{i}.running_var"] = norm.running_var
        return stats

    def set_running_stats(self, stats: dict[str, np.ndarray]):
        for i, norm in enumerate(self.norms):
            norm.running_mean = stats[f"norm{i}.running_mean"].copy()
            norm.running_var = stats[f"norm{i}.running_var"].copy()

    def clone(self) -> "DuelingQNetwork":
        other = DuelingQNetwork(
            self.n_inputs, self.hidden, self.n_actions, self.dropout_rate,
            rng=np.random.default_rng(0),
        )
        copy_parameters(self, other)
        return other


def copy_parameters(src: DuelingQNetwork, dst: DuelingQNetwork):
    """Deep-copy parameters and running statistics from src into dst."""
    if src.architecture != dst.architecture:
        raise ValueError(f"architecture mismatch: {src.architecture} vs {dst.architecture}")
    for name, arr in src.parameters().items():
        dst.parameters()[name][...] = arr
    dst.set_running_stats(src.running_stats())


class Adam:
    """Bias-corrected Adam over a named parameter dict."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / b1t
            v_hat = self.v[name] / b2t
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: Adam, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One in-place Adam update (spec-level convenience wrapper)."""
    state.step(params, grads)
    return params


def weighted_td_loss(
    net: DuelingQNetwork,
    x: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    mode: str = "frozen",
) -> float:
    """(1/B) sum_j w_j (y_j - Q_j[a_j])^2 via a fresh forward pass."""
    q = net.forward(x, mode=mode)
    taken = q[np.arange(len(actions)), actions]
    return float(np.mean(weights * (targets - taken) ** 2))


def finite_difference_gradients(
    net: DuelingQNetwork,
    x: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    h: float = 1e-5,
    mode: str = "frozen",
    param_names=None,
) -> dict[str, np.ndarray]:
    """Central-difference gradients of the weighted TD loss.

    Independent of backward(): only forward passes are evaluated. ``mode``
    must be dropout-free ("frozen", or "train" on a zero-dropout net).
    """
    params = net.parameters()
    names = list(param_names) if param_names is not None else list(params)
    grads = {}
    for name in names:
        arr = params[name]
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + h
            lp = weighted_td_loss(net, x, actions, targets, weights, mode=mode)
            arr[i] = orig - h
            lm = weighted_td_loss(net, x, actions, targets, weights, mode=mode)
            arr[i] = orig
            g[i] = (lp - lm) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_gradient_error(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    floor: float = 1e-6,
) -> float:
    """max over parameters of |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


# -- checkpoint I/O -----------------------------------------------------------


def save_checkpoint(path, net: DuelingQNetwork, adam: Optional[Adam] = None):
    """Dump all tensors, running stats and optimizer moments to an npz file."""
    arrays = {}
    for name, arr in net.parameters().items():
        arrays[f"param/{name}"] = arr
    for name, arr in net.running_stats().items():
        arrays[f"stat/{name}"] = arr
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "n_inputs": net.n_inputs,
        "hidden": list(net.hidden),
        "n_actions": net.n_actions,
        "dropout_rate": net.dropout_rate,
        "has_adam": adam is not None,
    }
    if adam is not None:
        meta["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                        "eps": adam.eps, "t": adam.t}
        for name, arr in adam.m.items():
            arrays[f"adam_m/{name}"] = arr
        for name, arr in adam.v.items():
            arrays[f"adam_v/{name}"] = arr
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Rebuild (network, adam-or-None) from an npz checkpoint, bit-exactly."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {meta['format_version']}")
        net = DuelingQNetwork(
            n_inputs=meta["n_inputs"],
            hidden=tuple(meta["hidden"]),
            n_actions=meta["n_actions"],
            dropout_rate=meta["dropout_rate"],
            rng=np.random.default_rng(0),
        )
        net.set_parameters({k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")})
        net.set_running_stats({k[len("stat/"):]: data[k] for k in data.files if k.startswith("stat/")})
        adam = None
        if meta["has_adam"]:
            a = meta["adam"]
            adam = Adam(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
            adam.t = a["t"]
            adam.m = {k[len("adam_m/"):]: data[k].copy() for k in data.files if k.startswith("adam_m/")}
            adam.v = {k[len("adam_v/"):]: data[k].copy() for k in data.files if k.startswith("adam_v/")}
    return net, adam
