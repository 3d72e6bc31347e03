import numpy as np
import pytest

from neurostream.data import N_CHANNELS, Emotion, Recording


def make_recording(data=None, n=600, fs=300.0, label=Emotion.Joy, subject="s01", trial="t01", seed=0):
    if data is None:
        data = np.random.default_rng(seed).normal(size=(N_CHANNELS, n))
    return Recording(subject, trial, label, fs, data)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
