"""Multilayer perceptron written directly against numpy.

Weights are stored as ``(n_in, n_out)`` matrices and applied to row batches,
``Y = X @ W + b``. The activation follows every layer except the last.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .io import read_container, write_container

log = logging.getLogger(__name__)

# activation name -> Lipschitz constant
ACTIVATIONS = {"relu": 1.0, "tanh": 1.0, "identity": 1.0}


def _act(name, a):
    if name == "relu":
        return np.maximum(a, 0)
    if name == "tanh":
        return np.tanh(a)
    return a


def _act_grad(name, a, h):
    """Derivative of the activation given pre-activation ``a`` and output ``h``."""
    if name == "relu":
        return (a > 0).astype(a.dtype)
    if name == "tanh":
        return 1 - h * h
    return np.ones_like(a)


@dataclass
class Mlp:
    weights: list
    biases: list
    activation: str = "relu"

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def depth(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def lipschitz_activation(self):
        return ACTIVATIONS[self.activation]

    def parameters(self):
        return list(self.weights) + list(self.biases)

    def copy(self):
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.activation)

    def astype(self, dtype):
        return Mlp([W.astype(dtype) for W in self.weights], [b.astype(dtype) for b in self.biases],
                   self.activation)

    def __call__(self, X):
        return forward(self, X)


def n_params_for(dims):
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def init_mlp(dims, activation="relu", seed=0, dtype=np.float64) -> Mlp:
    """He-uniform weights (gain matched to the activation), zero biases."""
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError(f"an MLP needs at least input and output widths, got {dims}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    gain = 2.0 if activation == "relu" else 1.0
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(3.0 * gain / n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype))
        biases.append(np.zeros(n_out, dtype=dtype))
    return Mlp(weights, biases, activation)


def forward(net: Mlp, X, return_cache=False):
    X = np.asarray(X, dtype=net.dtype)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    if X.shape[1] != net.dims[0]:
        raise ValueError(f"input width {X.shape[1]} does not match network input {net.dims[0]}")
    pre, post = [], [X]
    h = X
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = h @ W
        a += b
        if i < net.depth - 1:
            h = _act(net.activation, a)
            pre.append(a)
            post.append(h)
        else:
            h = a
    Y = h[0] if squeeze else h
    if return_cache:
        return Y, (pre, post)
    return Y


# --------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossConfig:
    """Penalty ``alpha / (n_problems * n_param) * prod ||W_i||_F`` added to the MSE.

    ``n_param`` defaults to the network's parameter count. Minibatch training
    uses ``n_problems = 1``; pass N_T for the full-data objective.
    """

    alpha: float = 0.0
    n_param: int | None = None
    n_problems: int = 1

    def coefficient(self, net):
        n_param = self.n_param or net.n_params
        return self.alpha / (self.n_problems * n_param)


def _check_batch(net, X, Z):
    X = np.asarray(X)
    Z = np.asarray(Z)
    if len(X) == 0:
        raise ValueError("empty batch")
    if X.ndim != 2 or Z.ndim != 2 or len(X) != len(Z):
        raise ValueError(f"batch shapes {X.shape} and {Z.shape} do not match")
    if X.shape[1] != net.dims[0] or Z.shape[1] != net.dims[-1]:
        raise ValueError(
            f"batch widths ({X.shape[1]}, {Z.shape[1]}) do not match network dims {net.dims}")


def loss_mse(net: Mlp, X, Z) -> float:
    """Mean over samples of the squared Euclidean residual."""
    _check_batch(net, X, Z)
    R = forward(net, X) - np.asarray(Z, dtype=net.dtype)
    return float(np.einsum("ij,ij->", R, R, dtype=np.float64) / len(R))


def frobenius_product(net: Mlp) -> float:
    return float(np.prod([np.linalg.norm(W.astype(np.float64)) for W in net.weights]))


def penalty(net: Mlp, cfg: LossConfig) -> float:
    if cfg.alpha == 0:
        return 0.0
    return cfg.coefficient(net) * frobenius_product(net)


def loss_regularized(net: Mlp, X, Z, cfg: LossConfig) -> float:
    return loss_mse(net, X, Z) + penalty(net, cfg)


def gradients(net: Mlp, X, Z, cfg: LossConfig | None = None):
    """Loss and analytic gradients ``(loss, dW list, db list)``."""
    _check_batch(net, X, Z)
    Y, (pre, post) = forward(net, X, return_cache=True)
    R = Y - np.asarray(Z, dtype=net.dtype)
    B = len(R)
    loss = float(np.einsum("ij,ij->", R, R, dtype=np.float64) / B)
    dW = [None] * net.depth
    db = [None] * net.depth
    delta = (2.0 / B) * R
    for i in range(net.depth - 1, -1, -1):
        dW[i] = post[i].T @ delta
        db[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * _act_grad(net.activation, pre[i - 1], post[i])

    if cfg is not None and cfg.alpha != 0:
        norms = np.array([np.linalg.norm(W.astype(np.float64)) for W in net.weights])
        coef = cfg.coefficient(net)
        loss += coef * float(np.prod(norms))
        # products of all other norms via prefix/suffix products; no division by a norm
        prefix = np.concatenate([[1.0], np.cumprod(norms)[:-1]])
        suffix = np.concatenate([np.cumprod(norms[::-1])[:-1][::-1], [1.0]])
        others = prefix * suffix
        for i, W in enumerate(net.weights):
            if norms[i] > 0:
                dW[i] = dW[i] + (coef * others[i] / norms[i]) * W
    return loss, dW, db


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)

    @classmethod
    def for_network(cls, net: Mlp, **hyper):
        params = net.parameters()
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(net: Mlp, dW, db, state: AdamState):
    """In-place Adam update of ``net`` with bias-corrected moments."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(net.parameters(), list(dW) + list(db), state.m, state.v):
        if m.shape != p.shape:
            raise ValueError("optimizer state does not match the network")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
    return net


def train_step(net: Mlp, X, Z, cfg: LossConfig, state: AdamState) -> float:
    loss, dW, db = gradients(net, X, Z, cfg)
    adam_step(net, dW, db, state)
    return loss


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1024
    epochs: int = 200
    patience: int = 20
    alpha: float = 0.0
    shuffle_seed: int = 0
    dtype: str = "float32"


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val: float
    train_loss: float
    steps: int

    def to_dict(self):
        return asdict(self)


def _batched_mse(net, X, Z, chunk=8192):
    total = 0.0
    for s in range(0, len(X), chunk):
        R = forward(net, X[s:s + chunk]) - Z[s:s + chunk]
        total += float(np.einsum("ij,ij->", R, R, dtype=np.float64))
    return total / len(X)


def train(net: Mlp, X, Z, X_val=None, Z_val=None, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Minibatch Adam on the (optionally regularized) MSE with early stopping.

    The returned network parameters are those of the epoch with the lowest
    validation MSE (training MSE when no validation data is given).
    """
    dtype = np.dtype(cfg.dtype)
    X = np.ascontiguousarray(X, dtype=dtype)
    Z = np.ascontiguousarray(Z, dtype=dtype)
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = np.ascontiguousarray(X_val, dtype=dtype)
        Z_val = np.ascontiguousarray(Z_val, dtype=dtype)
    work = net.astype(dtype)
    loss_cfg = LossConfig(alpha=cfg.alpha)
    state = AdamState.for_network(work, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rng = np.random.default_rng(cfg.shuffle_seed)

    best = work.copy()
    best_val, best_epoch, since_best = math.inf, 0, 0
    history = []
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total, batches = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            total += train_step(work, X[idx], Z[idx], loss_cfg, state)
            batches += 1
        train_loss = total / batches
        if not math.isfinite(train_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        val = _batched_mse(work, X_val, Z_val) if has_val else train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val})
        log.debug("epoch %d train %.4e val %.4e", epoch, train_loss, val)
        if val < best_val:
            best_val, best_epoch, since_best = val, epoch, 0
            best = work.copy()
        else:
            since_best += 1
            if since_best >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    for dst, src in zip(net.parameters(), best.astype(net.dtype).parameters()):
        dst[...] = src
    return TrainResult(history, best_epoch, best_val, history[best_epoch - 1]["train_loss"], state.step)


# --------------------------------------------------------------------------
# stability diagnostics


def spectral_norm(W, tol=1e-12, max_iter=20_000, seed=0) -> float:
    """Largest singular value by power iteration on ``WᵀW``."""
    W = np.asarray(W, dtype=np.float64)
    if not W.any():
        return 0.0
    v = np.random.default_rng(seed).standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = W @ v
        new = float(np.linalg.norm(u))
        v = W.T @ u
        nv = np.linalg.norm(v)
        if nv == 0:
            return new
        v /= nv
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    else:
        log.warning("power iteration hit max_iter=%d", max_iter)
    return float(np.linalg.norm(W @ v))


def spectral_bound(net: Mlp, tol=1e-12) -> float:
    """Product of the spectral norms of all weight matrices."""
    return float(np.prod([spectral_norm(W, tol) for W in net.weights]))


def lipschitz_output_bound(net: Mlp, x, x_prime, c_w=None):
    """``(‖N(x) - N(x')‖₂, c₀^(L-1) · c_W · ‖x - x'‖₂)`` for one input pair."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ValueError("inputs must have the same shape")
    net64 = net.astype(np.float64)
    if c_w is None:
        c_w = spectral_bound(net64)
    lhs = float(np.linalg.norm(forward(net64, x) - forward(net64, x_prime)))
    rhs = net.lipschitz_activation ** (net.depth - 1) * c_w * float(np.linalg.norm(x - x_prime))
    return lhs, rhs


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, net: Mlp, **meta):
    arrays = {}
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    header = {"kind": "checkpoint", "dims": net.dims, "activation": net.activation,
              "dtype": str(net.dtype)}
    header.update(meta)
    write_container(path, header, arrays)


def load_checkpoint(path):
    header, arrays = read_container(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path} is not a checkpoint")
    depth = len(header["dims"]) - 1
    dtype = np.dtype(header.get("dtype", "float64"))
    net = Mlp([arrays[f"W{i}"].astype(dtype) for i in range(depth)],
              [arrays[f"b{i}"].astype(dtype) for i in range(depth)], header["activation"])
    return net, header
