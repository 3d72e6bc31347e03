import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurostream.data import SynthSpec, gen_synthetic
from neurostream.errors import IntervalError
from neurostream.harness import ExperimentConfig
from neurostream.model import ModelConfig
from neurostream.preprocess import PreprocRecording
from neurostream.spectral import SpectralConfig
from neurostream.temporal import (
    IntervalSpec,
    interval_seed,
    interval_spectral,
    intervals_for,
    make_intervals,
    slice_recording,
    temporal_scan,
)

from conftest import make_recording


def test_interval_times():
    ivs = make_intervals(15.0, 300.0)
    assert len(ivs) == 8
    assert (ivs[0].start, ivs[0].end) == (0.0, 1.875)
    assert (ivs[7].start, ivs[7].end) == (13.125, 15.0)


def test_interval_sample_counts():
    ivs = make_intervals(4488 / 300.0, 300.0, 4488)
    counts = [iv.n_samples for iv in ivs]
    assert set(counts) <= {561, 562} and sum(counts) == 4488


@settings(max_examples=100, deadline=None)
@given(st.integers(8, 20_000), st.sampled_from([128.0, 250.0, 300.0, 512.0]))
def test_intervals_partition(n, fs):
    ivs = make_intervals(n / fs, fs, n)
    assert ivs[0].start_sample == 0 and ivs[-1].end_sample == n
    for a, b in zip(ivs, ivs[1:]):
        assert a.end_sample == b.start_sample
    widths = [iv.n_samples for iv in ivs]
    assert max(widths) - min(widths) <= 1
    covered = np.concatenate([np.arange(iv.start_sample, iv.end_sample) for iv in ivs])
    assert np.array_equal(covered, np.arange(n))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1000.0, allow_nan=False))
def test_intervals_scale_equivariant(total):
    a = make_intervals(total, 100.0)
    b = make_intervals(2 * total, 100.0)
    for x, y in zip(a, b):
        assert y.start == 2 * x.start and y.end == 2 * x.end


def test_make_intervals_rejects_non_positive():
    with pytest.raises(IntervalError):
        make_intervals(0.0, 300.0)


def test_slices_reconstruct_exactly():
    rec = PreprocRecording.wrap(make_recording(n=4488))
    parts = [slice_recording(rec, iv) for iv in intervals_for(rec)]
    assert np.array_equal(np.concatenate([p.data for p in parts], axis=1), rec.data)
    assert parts[0].data[0, 0] == rec.data[0, 0]
    assert all(p.subject_id == rec.subject_id and p.label == rec.label for p in parts)


def test_constant_slice():
    rec = make_recording(data=np.full((21, 800), 3.0))
    part = slice_recording(rec, make_intervals(800 / 300, 300.0, 800)[3])
    assert np.all(part.data == 3.0)


def test_slice_errors():
    rec = make_recording(n=100)
    with pytest.raises(IntervalError):
        slice_recording(rec, IntervalSpec(0, 0.0, 1.0, 50, 150))
    with pytest.raises(IntervalError, match="empty"):
        slice_recording(rec, IntervalSpec(0, 0.0, 1.0, 10, 10))


def test_interval_spectral_switch():
    cfg = SpectralConfig()
    assert interval_spectral(cfg, 561).window_len == 128
    assert interval_spectral(cfg, 561).hop == 64
    assert interval_spectral(cfg, 639).window_len == 128
    assert interval_spectral(cfg, 640) is cfg


def test_interval_seed_distinct():
    seeds = {interval_seed(0, j) for j in range(8)}
    assert len(seeds) == 8
    assert interval_seed(0, 3) == interval_seed(0, 3)


TINY = ExperimentConfig(
    model=ModelConfig(conv_filters=3, conv_kernel=2, pool=1, lstm_units=4, dense_units=4), epochs=2, batch_size=6
)


def test_scan_skips_short_intervals_but_reports_all(tmp_path):
    spec = SynthSpec(n_subjects=1, duration=1.0, noise=0.5)
    tr, va = gen_synthetic(spec, 0), gen_synthetic(SynthSpec(n_subjects=1, duration=1.0, noise=0.5, split="validation"), 1)
    rep = temporal_scan(tr, va, TINY)
    for v in ("mono", "bi"):
        entries = rep.for_variant(v)
        assert [e.j for e in entries] == list(range(8))
        assert all(e.status == "skipped" and e.reason for e in entries)
    out = tmp_path / "scan.csv"
    rep.write_csv(out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["variant", "j", "train_acc", "val_acc", "status"]
    assert len(rows) == 17


def test_scan_deterministic():
    spec = SynthSpec(n_subjects=1, duration=8.0, noise=0.5)
    tr = gen_synthetic(spec, 0)
    va = gen_synthetic(SynthSpec(n_subjects=1, duration=8.0, noise=0.5, split="validation"), 1)
    a = temporal_scan(tr, va, TINY, variants=("bi",))
    b = temporal_scan(tr, va, TINY, variants=("bi",))
    assert a.to_dict() == b.to_dict()
    for e in a.entries:
        assert e.status == "ok"
        assert 0 <= e.train_acc <= 100 and 0 <= e.val_acc <= 100
