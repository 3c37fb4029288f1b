"""
Small dense networks with hand-written backpropagation.

Parameters are plain numpy arrays updated in place, ordered
[W0, b0, W1, b1, ...]; weights are (fan_in, fan_out) and act on row batches.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from errors import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

ACTIVATIONS = ('tanh', 'relu', 'linear')


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == 'tanh':
        return np.tanh(pre)
    if name == 'relu':
        return np.maximum(pre, 0.0)
    return pre


def _activation_slope(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == 'tanh':
        return 1.0 - out ** 2
    if name == 'relu':
        return (pre > 0).astype(pre.dtype)
    return np.ones_like(pre)


@dataclass(eq=False)
class MLP:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        self.activations = list(self.activations)
        if not (len(self.weights) == len(self.biases) == len(self.activations) >= 1):
            raise ShapeMismatchError("need one bias and one activation per weight matrix")
        for i, (w, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatchError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeMismatchError(f"layer {i} input {w.shape[0]} does not match "
                                         f"previous output {self.weights[i - 1].shape[1]}")
            if act not in ACTIVATIONS:
                raise DomainError(f"unknown activation {act!r}")
        if not all(np.all(np.isfinite(p)) for p in self.parameters()):
            raise DomainError("network parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [tuple(w.shape) for w in self.weights]

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def forward(self, X: np.ndarray):
        """Returns (output, cache) for backward."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ShapeMismatchError(f"expected inputs of width {self.in_dim}, got {X.shape}")
        cache = []
        out = X
        for w, b, act in zip(self.weights, self.biases, self.activations):
            pre = out @ w + b
            nxt = _activate(act, pre)
            cache.append((out, pre, nxt))
            out = nxt
        return out, cache

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, cache, d_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients (parameters() order) and input gradient for upstream d_out."""
        grads: List[np.ndarray] = []
        delta = d_out
        for i in reversed(range(len(self.weights))):
            inputs, pre, out = cache[i]
            d_pre = delta * _activation_slope(self.activations[i], pre, out)
            grads = [inputs.T @ d_pre, d_pre.sum(axis=0)] + grads
            delta = d_pre @ self.weights[i].T
        return grads, delta


def init_mlp(rng: np.random.Generator, sizes: Sequence[int], activations: Sequence[str]) -> MLP:
    """Glorot-uniform weights, zero biases."""
    if len(activations) != len(sizes) - 1:
        raise ShapeMismatchError(f"{len(sizes) - 1} layers need as many activations")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases, list(activations))


# ============================================================================
# Flat parameter view
# ============================================================================


def flatten_params(params: Sequence[np.ndarray]) -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([np.ravel(p) for p in params])


def assign_flat(params: Sequence[np.ndarray], flat) -> None:
    """Copy a flat vector back into the arrays, in place."""
    flat = np.asarray(flat, dtype=np.float64).reshape(-1)
    total = sum(p.size for p in params)
    if flat.size != total:
        raise ShapeMismatchError(f"flat vector has {flat.size} values, parameters need {total}")
    offset = 0
    for p in params:
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size


# ============================================================================
# Optimizer
# ============================================================================


class SGD:
    """Plain SGD with optional heavy-ball momentum; velocity state per parameter."""

    def __init__(self, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise DomainError(f"learning rate must be >= 0, got {lr}")
        if not 0 <= momentum < 1:
            raise DomainError(f"momentum must lie in [0, 1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self._velocity: List[np.ndarray] = []

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        if len(params) != len(grads):
            raise ShapeMismatchError(f"{len(params)} parameters but {len(grads)} gradients")
        if not self._velocity:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, vel in zip(params, grads, self._velocity):
            vel *= self.momentum
            vel -= self.lr * g
            p += vel


# ============================================================================
# Finite-difference gradient check
# ============================================================================


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(params: Sequence[np.ndarray], loss_fn: Callable[[], float],
               grads: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Worst relative error between `grads` and central differences of loss_fn.

    loss_fn is re-evaluated with each parameter entry nudged in place by
    +-eps; every entry is restored afterwards.
    """
    if eps <= 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    if len(params) != len(grads):
        raise ShapeMismatchError(f"{len(params)} parameters but {len(grads)} gradients")
    worst = 0.0
    for p, g in zip(params, grads):
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + eps
            up = loss_fn()
            flat[j] = original - eps
            down = loss_fn()
            flat[j] = original
            if not (np.isfinite(up) and np.isfinite(down)):
                raise DomainError(f"non-finite loss at perturbed entry {j}")
            num_flat[j] = (up - down) / (2 * eps)
        if numeric.size:
            worst = max(worst, float(relative_error(np.asarray(g), numeric).max()))
    logger.debug("grad check worst relative error %.3g", worst)
    return worst
