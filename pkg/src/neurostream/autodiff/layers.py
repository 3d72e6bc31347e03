"""Layer ops used by the classifier, each with an exact backward rule.

Sequence ops take ``(T, F)`` or batched ``(B, T, F)`` input; a missing
batch axis is added on entry and removed on exit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError, TargetError
from .tensor import Tensor, add, as_tensor, matmul, mul, relu, sigmoid_np, square, tsum


def _batched(x: Tensor, name: str) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return _expand(x), True
    if x.ndim != 3:
        raise ShapeError(f"{name}: expected (T, F) or (B, T, F), got {x.shape}")
    return x, False


def _expand(x: Tensor) -> Tensor:
    out = Tensor._result(x.data[None], (x,), "expand")
    if out.requires_grad:
        out._backward = lambda: x._accumulate(out.grad[0])
    return out


def _squeeze(x: Tensor) -> Tensor:
    out = Tensor._result(x.data[0], (x,), "squeeze")
    if out.requires_grad:
        out._backward = lambda: x._accumulate(out.grad[None])
    return out


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid convolution over time: out[t, o] = Σ_k,i x[t+k, i]·w[k, i, o] + b[o]."""
    x, single = _batched(as_tensor(x), "conv1d")
    b_, t, fi = x.shape
    if kernels.ndim != 3 or kernels.shape[1] != fi or bias.shape != (kernels.shape[2],):
        raise ShapeError(f"conv1d: kernels {kernels.shape} / bias {bias.shape} do not fit input {x.shape}")
    k, _, fo = kernels.shape
    if t < k:
        raise ShapeError(f"conv1d: {t} frames shorter than kernel {k}")
    tout = t - k + 1
    # (B, T', Fi, K) -> (B, T', K, Fi) -> (B, T', K*Fi)
    cols = sliding_window_view(x.data, k, axis=1).transpose(0, 1, 3, 2).reshape(b_, tout, k * fi)
    w2 = kernels.data.reshape(k * fi, fo)
    out = Tensor._result(cols @ w2 + bias.data, (x, kernels, bias), "conv1d")
    if out.requires_grad:
        def backward():
            g = out.grad
            if kernels.requires_grad:
                kernels._accumulate((cols.reshape(-1, k * fi).T @ g.reshape(-1, fo)).reshape(k, fi, fo))
            if bias.requires_grad:
                bias._accumulate(g.sum(axis=(0, 1)))
            if x.requires_grad:
                dcols = (g @ w2.T).reshape(b_, tout, k, fi)
                dx = np.zeros_like(x.data)
                for j in range(k):
                    dx[:, j : j + tout] += dcols[:, :, j]
                x._accumulate(dx)
        out._backward = backward
    return _squeeze(out) if single else out


def maxpool1d(x: Tensor, pool: int) -> Tensor:
    """Non-overlapping max over time; trailing frames are dropped, ties go to the first index."""
    x, single = _batched(as_tensor(x), "maxpool1d")
    if pool < 1:
        raise ConfigError("pool must be >= 1")
    b_, t, f = x.shape
    if pool > t:
        raise ShapeError(f"maxpool1d: pool {pool} larger than {t} frames")
    tout = t // pool
    win = x.data[:, : tout * pool].reshape(b_, tout, pool, f)
    arg = win.argmax(axis=2)
    out = Tensor._result(np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :], (x,), "maxpool1d")
    if out.requires_grad:
        def backward():
            g = np.zeros_like(win)
            np.put_along_axis(g, arg[:, :, None, :], out.grad[:, :, None, :], axis=2)
            dx = np.zeros_like(x.data)
            dx[:, : tout * pool] = g.reshape(b_, tout * pool, f)
            x._accumulate(dx)
        out._backward = backward
    return _squeeze(out) if single else out


def dropout(x: Tensor, rate: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("train-mode dropout needs an explicit generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


def lstm(x: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    """Final hidden state of a single-layer LSTM with h0 = c0 = 0.

    ``W`` is (F, 4H), ``U`` is (H, 4H), ``b`` is (4H,); gate blocks are
    ordered input, forget, candidate, output.
    """
    x, single = _batched(as_tensor(x), "lstm")
    bsz, t, f = x.shape
    if W.ndim != 2 or W.shape[0] != f or W.shape[1] % 4:
        raise ShapeError(f"lstm: W {W.shape} does not fit input features {f}")
    h = W.shape[1] // 4
    if U.shape != (h, 4 * h) or b.shape != (4 * h,):
        raise ShapeError(f"lstm: U {U.shape} / b {b.shape} inconsistent with hidden size {h}")
    if t < 1:
        raise ShapeError("lstm: need at least one time step")

    xw = x.data @ W.data + b.data  # (B, T, 4H)
    hs = np.zeros((t + 1, bsz, h))
    cs = np.zeros((t + 1, bsz, h))
    gates = np.empty((t, bsz, 4 * h))
    for s in range(t):
        z = xw[:, s] + hs[s] @ U.data
        gi = sigmoid_np(z[:, :h])
        gf = sigmoid_np(z[:, h : 2 * h])
        gg = np.tanh(z[:, 2 * h : 3 * h])
        go = sigmoid_np(z[:, 3 * h :])
        cs[s + 1] = gf * cs[s] + gi * gg
        hs[s + 1] = go * np.tanh(cs[s + 1])
        gates[s] = np.concatenate((gi, gf, gg, go), axis=1)

    out = Tensor._result(hs[t].copy(), (x, W, U, b), "lstm")
    if out.requires_grad:
        def backward():
            dW = np.zeros_like(W.data)
            dU = np.zeros_like(U.data)
            db = np.zeros_like(b.data)
            dx = np.zeros_like(x.data)
            dh = out.grad.copy()
            dc = np.zeros((bsz, h))
            for s in reversed(range(t)):
                gi, gf, gg, go = np.split(gates[s], 4, axis=1)
                tc = np.tanh(cs[s + 1])
                dc = dc + dh * go * (1.0 - tc * tc)
                dz = np.concatenate(
                    (
                        dc * gg * gi * (1.0 - gi),
                        dc * cs[s] * gf * (1.0 - gf),
                        dc * gi * (1.0 - gg * gg),
                        dh * tc * go * (1.0 - go),
                    ),
                    axis=1,
                )
                dW += x.data[:, s].T @ dz
                dU += hs[s].T @ dz
                db += dz.sum(axis=0)
                dx[:, s] = dz @ W.data.T
                dh = dz @ U.data.T
                dc = dc * gf
            W._accumulate(dW)
            U._accumulate(dU)
            b._accumulate(db)
            x._accumulate(dx)
        out._backward = backward
    return _squeeze(out) if single else out


def dense(x: Tensor, W: Tensor, b: Tensor, activation: str = "none") -> Tensor:
    if x.shape[-1] != W.shape[0] or W.ndim != 2 or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: x {x.shape}, W {W.shape}, b {b.shape} do not agree")
    z = add(matmul(x, W), b)
    if activation == "relu":
        return relu(z)
    if activation != "none":
        raise ConfigError(f"unknown activation {activation!r}")
    return z


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Tensor) -> Tensor:
    p = softmax_np(logits.data)
    out = Tensor._result(p, (logits,), "softmax")
    if out.requires_grad:
        def backward():
            g = out.grad
            logits._accumulate(p * (g - (g * p).sum(axis=-1, keepdims=True)))
        out._backward = backward
    return out


def check_one_hot(targets: np.ndarray, n_classes: int | None = None) -> None:
    t = np.asarray(targets)
    if t.ndim != 2 or (n_classes is not None and t.shape[1] != n_classes):
        raise TargetError(f"targets must be (N, C) one-hot, got shape {t.shape}")
    ok = np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)
    if not ok:
        raise TargetError("targets are not one-hot rows")


def one_hot(labels: Sequence[int], n_classes: int) -> np.ndarray:
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return y


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Mean categorical cross-entropy of softmax(logits) against one-hot rows."""
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if logits.ndim != 2 or y.shape != logits.shape:
        raise ShapeError(f"softmax_xent: logits {logits.shape} vs targets {y.shape}")
    check_one_hot(y)
    n = logits.shape[0]
    logp = log_softmax_np(logits.data)
    loss = -(y * logp).sum() / n
    out = Tensor._result(np.asarray(loss), (logits,), "softmax_xent")
    if out.requires_grad:
        out._backward = lambda: logits._accumulate(out.grad * (np.exp(logp) - y) / n)
    return out


def l2_penalty(params: Sequence[Tensor], lam: float) -> Tensor:
    """``lam * Σ ||W||²`` over the given weight tensors."""
    if lam < 0:
        raise ConfigError("L2 coefficient must be >= 0")
    total = Tensor(0.0)
    for p in params:
        total = add(total, tsum(square(p)))
    return mul(total, float(lam))
