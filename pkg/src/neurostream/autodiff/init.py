"""Seeded parameter initialisers."""

import math

import numpy as np


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def lstm_bias(hidden: int, forget_bias: float = 1.0) -> np.ndarray:
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = forget_bias
    return b
