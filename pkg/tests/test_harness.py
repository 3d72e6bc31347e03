import json
import logging

import numpy as np
import pytest

from neurostream.data import Dataset, Emotion, SynthSpec, gen_synthetic
from neurostream.errors import CompatibilityError, ConfigError, LabelError, NumericalError
from neurostream.harness import (
    ExperimentConfig,
    build_features,
    compare_variants,
    confusion_matrix,
    evaluate,
    evaluate_features,
    fit,
    predict,
    report_from_predictions,
    train,
)
from neurostream.model import ModelConfig
from neurostream.spectral import SpectralConfig

TINY = ModelConfig(conv_filters=4, lstm_units=6, dense_units=8)
SPEC = SynthSpec(n_subjects=2, duration=2.0, noise=0.1)


@pytest.fixture(scope="module")
def data():
    return gen_synthetic(SPEC, 0), gen_synthetic(SynthSpec(n_subjects=1, duration=2.0, noise=0.1, split="validation", subject_offset=10), 1)


def cfg(**kw):
    base = dict(model=TINY, spectral=SpectralConfig(window_len=64, hop=32), epochs=4, batch_size=4, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_confusion_examples():
    y = np.arange(6)
    rep = report_from_predictions(y, y)
    assert rep.accuracy == 100.0 and np.array_equal(rep.confusion, np.eye(6, dtype=int))
    cyc = report_from_predictions(y, (y + 1) % 6)
    assert cyc.accuracy == 0.0
    assert np.all(cyc.confusion.sum(axis=1) == 1) and np.trace(cyc.confusion) == 0


def test_confusion_invariants(rng):
    y = rng.integers(0, 6, 200)
    p = rng.integers(0, 6, 200)
    rep = report_from_predictions(y, p)
    assert np.array_equal(rep.confusion.sum(axis=1), np.bincount(y, minlength=6))
    assert rep.accuracy == pytest.approx(100 * np.trace(rep.confusion) / 200)
    assert np.allclose(rep.confusion_percent.sum(axis=1), 100.0)
    assert rep.recall["anger"] == pytest.approx(rep.confusion_percent[0, 0])
    assert confusion_matrix([0], [5])[0, 5] == 1


def test_config_json_round_trip(tmp_path):
    c = cfg(variant="mono", lr=5e-4)
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(c.to_dict()))
    assert ExperimentConfig.from_json(p) == c
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epoch": 3})
    with pytest.raises(ConfigError):
        ExperimentConfig(epochs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(variant="tri")


def test_fit_deterministic_and_best_checkpoint(data):
    tr, va = data
    c = cfg()
    p1, r1 = train(tr, va, c)
    p2, r2 = train(tr, va, c)
    assert [row["val_loss"] for row in r1.loss_curve] == [row["val_loss"] for row in r2.loss_curve]
    assert [row["train_loss"] for row in r1.loss_curve] == [row["train_loss"] for row in r2.loss_curve]
    for k in p1.tensors:
        np.testing.assert_array_equal(p1[k].data, p2[k].data)
    best = min(row["val_loss"] for row in r1.loss_curve)
    assert r1.loss == best
    assert r1.loss_curve[r1.best_epoch - 1]["val_loss"] == best
    assert len(r1.loss_curve) == 4


def test_seed_changes_run(data):
    tr, va = data
    _, a = train(tr, va, cfg(seed=1))
    _, b = train(tr, va, cfg(seed=2))
    assert a.loss_curve[0]["train_loss"] != b.loss_curve[0]["train_loss"]


def test_early_stopping(data):
    tr, va = data
    _, rep = train(tr, va, cfg(epochs=50, early_stop_patience=1, lr=0.5))
    assert len(rep.loss_curve) < 50


def test_missing_class_warns(data, caplog):
    tr, _ = data
    sub = Dataset([r for r in tr if r.label != Emotion.Fear])
    with caplog.at_level(logging.WARNING):
        train(sub, None, cfg(epochs=1))
    assert "fear" in caplog.text


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_reports_context(data):
    tr, va = data
    with pytest.raises(NumericalError, match="epoch"):
        train(tr, va, cfg(lr=1e300, epochs=3))


def test_evaluate_and_predict(data):
    tr, va = data
    c = cfg()
    params, _ = train(tr, va, c)
    rep = evaluate(va, params, c)
    assert rep.n == len(va)
    assert rep.confusion.sum() == len(va)

    unlabelled = va.with_labels([None] * len(va))
    with pytest.raises(LabelError, match="predict"):
        evaluate(unlabelled, params, c)
    pred = predict(unlabelled, params, c)
    assert pred.ids == [(r.subject_id, r.trial_id) for r in va]
    assert np.allclose(pred.probabilities.sum(axis=1), 1.0, atol=1e-12)
    assert [int(e) for e in pred.labels] == list(pred.probabilities.argmax(axis=1))

    one = predict(Dataset([va[2]]), params, c)
    np.testing.assert_allclose(one.probabilities[0], pred.probabilities[2], atol=1e-14)

    with pytest.raises(CompatibilityError):
        predict(va, params, c.with_(variant="mono"))


def test_fit_needs_labels(data):
    tr, _ = data
    fs = build_features(tr.with_labels([None] * len(tr)), cfg())
    with pytest.raises(LabelError):
        fit(fs, None, cfg())


def test_evaluate_features_tie_goes_to_lowest(data):
    tr, _ = data
    c = cfg()
    params, _ = train(tr, None, c.with_(epochs=1))
    for k in ("head.out.w", "head.out.b"):
        params.tensors[k].data[:] = 0.0
    rep = evaluate_features(build_features(tr, c), params)
    assert np.all(rep.confusion[:, 0] == rep.confusion.sum(axis=1))


def test_compare_structure(data):
    tr, va = data
    cmp = compare_variants(tr, va, cfg(epochs=2), n_seeds=2)
    assert [r.variant for r in cmp.rows] == ["mono", "bi"]
    assert cmp.seeds == [3, 4]
    same = compare_variants(tr, va, cfg(epochs=2), n_seeds=2, variants=("bi", "bi"))
    assert same.rows[0].accuracies == same.rows[1].accuracies
    with pytest.raises(ConfigError):
        compare_variants(tr, va, cfg(), n_seeds=0)
