"""Randomised finite-difference checks over every differentiable op and the full losses."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, conv1d, dense, dropout, grad_check, l2_penalty, lstm, maxpool1d, softmax, softmax_xent
from .autodiff.layers import one_hot
from .autodiff.tensor import concat, sigmoid, tanh
from .model import ModelConfig, init_params, logits, loss

OP_STEP = 1e-6
# Full-network checks use a larger step: at 1e-6 the float64 round-off in the
# loss (~1e-16 absolute) swamps coordinates whose true gradient is below ~1e-6.
MODEL_STEP = 1e-4


@dataclass
class SuiteResult:
    name: str
    trials: int
    max_error: float
    seconds: float
    step: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error <= tol


def _projected(out_fn: Callable[[], Tensor], shape, rng) -> Callable[[], Tensor]:
    # random linear read-out keeps the scalar O(1) with O(1) gradients
    r = rng.normal(size=shape)
    return lambda: (out_fn() * r).sum()


def _param(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def trial_conv1d(rng):
    b, k = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    t, fi, fo = int(rng.integers(k, k + 6)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
    x, w, bias = _param(rng, b, t, fi), _param(rng, k, fi, fo), _param(rng, fo)
    f = _projected(lambda: conv1d(x, w, bias), (b, t - k + 1, fo), rng)
    return grad_check(f, [x, w, bias], OP_STEP)


def trial_maxpool1d(rng):
    b, pool = int(rng.integers(1, 3)), int(rng.integers(1, 4))
    t, fdim = int(rng.integers(pool, 3 * pool + 2)), int(rng.integers(1, 4))
    x = _param(rng, b, t, fdim)
    f = _projected(lambda: maxpool1d(x, pool), (b, t // pool, fdim), rng)
    return grad_check(f, [x], OP_STEP)


def trial_dropout(rng):
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)))
    x = _param(rng, *shape)
    rate = float(rng.uniform(0.1, 0.7))
    seed = int(rng.integers(1 << 30))
    f = _projected(lambda: dropout(x, rate, "train", np.random.default_rng(seed)), shape, rng)
    return grad_check(f, [x], OP_STEP)


def trial_lstm(rng):
    b, t, fdim, h = (int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    x = _param(rng, b, t, fdim)
    W, U, bias = _param(rng, fdim, 4 * h, scale=0.5), _param(rng, h, 4 * h, scale=0.5), _param(rng, 4 * h, scale=0.5)
    f = _projected(lambda: lstm(x, W, U, bias), (b, h), rng)
    return grad_check(f, [x, W, U, bias], OP_STEP)


def trial_dense(rng):
    n, fi, fo = int(rng.integers(1, 4)), int(rng.integers(1, 9)), int(rng.integers(1, 6))
    act = "relu" if rng.random() < 0.5 else "none"
    x, W, b = _param(rng, n, fi), _param(rng, fi, fo), _param(rng, fo)
    f = _projected(lambda: dense(x, W, b, act), (n, fo), rng)
    return grad_check(f, [x, W, b], OP_STEP)


def trial_softmax_xent(rng):
    n, c = int(rng.integers(1, 5)), 6
    z = _param(rng, n, c, scale=2.0)
    y = one_hot(rng.integers(0, c, n), c)
    return grad_check(lambda: softmax_xent(z, y), [z], OP_STEP)


def trial_softmax(rng):
    n, c = int(rng.integers(1, 4)), int(rng.integers(2, 7))
    z = _param(rng, n, c)
    f = _projected(lambda: softmax(z), (n, c), rng)
    return grad_check(f, [z], OP_STEP)


def trial_l2(rng):
    ws = [_param(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(int(rng.integers(1, 3)))]
    lam = float(rng.uniform(0.0, 1.0))
    return grad_check(lambda: l2_penalty(ws, lam), ws, OP_STEP)


def trial_elementwise(rng):
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    a, b = _param(rng, *shape), _param(rng, *shape)
    def f():
        return concat([sigmoid(a) * tanh(b), a - b, (a @ Tensor(np.eye(shape[1])))], axis=0)
    return grad_check(_projected(f, (3 * shape[0], shape[1]), rng), [a, b], OP_STEP)


TOY_MODEL = ModelConfig(conv_filters=3, conv_kernel=2, pool=2, lstm_units=3, dense_units=4)
TOY_FRAMES = 12
TOY_FEATURES = 5


def _model_trial(variant: str, rng) -> float:
    seed = int(rng.integers(1 << 30))
    params = init_params(TOY_MODEL, variant, TOY_FEATURES, seed)
    xs = tuple(rng.normal(size=(2, TOY_FRAMES, TOY_FEATURES)) for _ in params.streams)
    y = one_hot(rng.integers(0, 6, 2), 6)
    f = lambda: loss(logits(xs, params, "train", np.random.default_rng(seed)), y, params)
    return grad_check(f, list(params.tensors.values()), MODEL_STEP)


def trial_bi_loss(rng):
    return _model_trial("bi", rng)


def trial_mono_loss(rng):
    return _model_trial("mono", rng)


OPS = {
    "conv1d": trial_conv1d,
    "maxpool1d": trial_maxpool1d,
    "dropout": trial_dropout,
    "lstm": trial_lstm,
    "dense": trial_dense,
    "softmax": trial_softmax,
    "softmax_xent": trial_softmax_xent,
    "l2_penalty": trial_l2,
    "elementwise": trial_elementwise,
    "bi_loss": trial_bi_loss,
    "mono_loss": trial_mono_loss,
}


def run_suite(trials: int = 20, seed: int = 0, ops=None) -> list[SuiteResult]:
    results = []
    for i, (name, fn) in enumerate(OPS.items()):
        if ops is not None and name not in ops:
            continue
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        worst = max(fn(rng) for _ in range(trials))
        step = MODEL_STEP if name.endswith("_loss") else OP_STEP
        results.append(SuiteResult(name, trials, float(worst), time.perf_counter() - t0, step))
    return results
