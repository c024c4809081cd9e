"""Minimal deterministic dense-layer toolkit.

Linear layers, same-length 1D convolution, elementwise activations, their
hand-derived backward passes, plain SGD, and a central-difference gradient
checker. Everything is float64 and free of hidden state: forward passes are
pure functions of their arguments, backward passes return gradients that are
exact (not approximated) derivatives of the forward maps.

Parameter initialization is a pure function of a 64-bit seed via a SplitMix64
stream, so checkpoints are reproducible across platforms.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EvenKernel, NonFiniteGradient, ShapeMismatch

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 pseudo-random stream.

    Tiny, auditable generator used for parameter initialization; identical
    output for identical seeds on every platform.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float, hi: float) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53  # 53-bit mantissa in [0, 1)
        return lo + u * (hi - lo)

    def uniform_array(self, shape, lo: float, hi: float) -> np.ndarray:
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(out.size):
            out[i] = self.uniform(lo, hi)
        return out.reshape(shape)


class Param:
    """A learnable tensor paired with its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def copy(self) -> "Param":
        p = Param(self.value.copy())
        p.grad = self.grad.copy()
        return p


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: SplitMix64) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_array(shape, -limit, limit)


def zero_grads(params: dict[str, Param]) -> None:
    for p in params.values():
        p.grad[...] = 0.0


def scale_grads(params: dict[str, Param], factor: float) -> None:
    for p in params.values():
        p.grad *= factor


def sgd_step(params: dict[str, Param], lr: float) -> None:
    """In-place SGD update p <- p - lr * g; gradients are zeroed afterwards.

    Aborts without touching any value if a gradient is non-finite.
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(f"non-finite gradient in {name!r}")
    for p in params.values():
        p.value -= lr * p.grad
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w.T + b for x of shape (..., in) and w of shape (out, in)."""
    if w.ndim != 2 or b.shape != (w.shape[0],) or x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(
            f"linear: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return x @ w.T + b


def linear_backward(x, w, dy):
    """Gradients of linear_forward: returns (dx, dw, db)."""
    if dy.shape[-1] != w.shape[0] or x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(f"linear backward: x {x.shape}, w {w.shape}, dy {dy.shape}")
    dx = dy @ w
    if x.ndim == 1:
        dw = np.outer(dy, x)
        db = dy.copy()
    else:
        dw = dy.T @ x
        db = dy.sum(axis=0)
    return dx, dw, db


def conv1d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-length 1D correlation with zero padding.

    x is (C_in, N), k is (C_out, C_in, width) with odd width, b is (C_out,).
    Output (C_out, N): y[o, t] = b[o] + sum_{c, j} k[o, c, j] * xpad[c, t + j]
    where xpad is x padded with (width-1)/2 zeros on both ends.
    """
    if k.ndim != 3:
        raise ShapeMismatch(f"conv1d kernel must be 3-D, got {k.shape}")
    c_out, c_in, width = k.shape
    if width % 2 == 0:
        raise EvenKernel(f"kernel width {width} is even")
    if x.ndim != 2 or x.shape[0] != c_in or b.shape != (c_out,):
        raise ShapeMismatch(f"conv1d: x {x.shape}, k {k.shape}, b {b.shape}")
    n = x.shape[1]
    pad = (width - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad)))
    y = np.broadcast_to(b[:, None], (c_out, n)).copy()
    for j in range(width):
        y += k[:, :, j] @ xp[:, j : j + n]
    return y


def conv1d_backward(x, k, dy):
    """Gradients of conv1d_forward: returns (dx, dk, db)."""
    c_out, c_in, width = k.shape
    n = x.shape[1]
    if dy.shape != (c_out, n) or x.shape[0] != c_in:
        raise ShapeMismatch(f"conv1d backward: x {x.shape}, k {k.shape}, dy {dy.shape}")
    pad = (width - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad)))
    db = dy.sum(axis=1)
    dk = np.empty_like(k)
    dxp = np.zeros_like(xp)
    for j in range(width):
        dk[:, :, j] = dy @ xp[:, j : j + n].T
        dxp[:, j : j + n] += k[:, :, j].T @ dy
    dx = dxp[:, pad : pad + n] if pad else dxp
    return dx, dk, db


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dy):
    return dy * (x > 0)


def sigmoid(x):
    """Numerically stable logistic function (no overflow for large |x|)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_backward(x, dy):
    s = sigmoid(x)
    return dy * s * (1.0 - s)


def tanh(x):
    return np.tanh(x)


def tanh_backward(x, dy):
    t = np.tanh(x)
    return dy * (1.0 - t * t)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(loss_fn, grad_fn, arrays, epsilon: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    loss_fn() evaluates the scalar loss from the current contents of
    `arrays`; grad_fn() returns gradient arrays aligned with `arrays`.
    Each coordinate is perturbed in place by +/- epsilon.

    Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
    """
    if not (1e-6 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon {epsilon} outside [1e-6, 1e-3]")
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in grad_fn()]
    max_rel = 0.0
    for arr, g in zip(arrays, analytic):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp = loss_fn()
            flat[i] = orig - epsilon
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * epsilon)
            rel = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            if rel > max_rel:
                max_rel = rel
    return max_rel
