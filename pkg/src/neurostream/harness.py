"""Training loop, evaluation metrics and experiment configuration."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import AdamState, Tensor, adam_step
from .autodiff.layers import one_hot, softmax_np
from .data import N_CLASSES, Dataset, Emotion
from .errors import CompatibilityError, ConfigError, LabelError, NumericalError, OptimizerError
from .hemisplit import LEFT, RIGHT
from .model import VARIANTS, ModelConfig, ModelParams, init_params, logits, loss
from .preprocess import PreprocConfig, PreprocRecording, preprocess
from .spectral import SpectralConfig, spectral_features

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    preproc: PreprocConfig = field(default_factory=PreprocConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    variant: str = "bi"
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    early_stop_patience: int = 30
    lr: float = 1e-3
    standardize: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown ExperimentConfig fields: {sorted(extra)}")
        subs = {"preproc": PreprocConfig, "spectral": SpectralConfig, "model": ModelConfig}
        for key, typ in subs.items():
            if key in d and isinstance(d[key], dict):
                d[key] = typ.from_dict(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "preproc": self.preproc.to_dict(),
            "spectral": self.spectral.to_dict(),
            "model": self.model.to_dict(),
            "variant": self.variant,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "early_stop_patience": self.early_stop_patience,
            "lr": self.lr,
            "standardize": self.standardize,
        }

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


# ------------------------------------------------------------- features


@dataclass
class FeatureSet:
    """Model inputs for a batch of recordings: one (N, T, F) array per stream."""

    inputs: tuple[np.ndarray, ...]
    labels: np.ndarray | None
    ids: list[tuple[str, str]]

    def __len__(self):
        return len(self.ids)

    @property
    def frames(self) -> int:
        return self.inputs[0].shape[1]

    @property
    def n_features(self) -> int:
        return self.inputs[0].shape[2]

    def take(self, idx) -> tuple[np.ndarray, ...]:
        return tuple(x[idx] for x in self.inputs)


def stream_channels(variant: str):
    return (LEFT, RIGHT) if variant == "bi" else (None,)


def features_from_prepped(
    recs: Sequence[PreprocRecording], variant: str, spectral: SpectralConfig
) -> FeatureSet:
    per_stream = [[] for _ in stream_channels(variant)]
    for rec in recs:
        for i, chans in enumerate(stream_channels(variant)):
            per_stream[i].append(spectral_features(rec, spectral, chans).data)
    t_min = min(a.shape[0] for a in per_stream[0])
    if any(a.shape[0] != t_min for a in per_stream[0]):
        log.warning("recordings differ in length; cropping all to %d frames", t_min)
    inputs = tuple(np.stack([a[:t_min] for a in arrs]) for arrs in per_stream)
    labels = None
    if all(r.label is not None for r in recs):
        labels = np.array([int(r.label) for r in recs], dtype=np.int64)
    return FeatureSet(inputs, labels, [(r.subject_id, r.trial_id) for r in recs])


def build_features(ds: Dataset, cfg: ExperimentConfig) -> FeatureSet:
    return features_from_prepped([preprocess(r, cfg.preproc) for r in ds], cfg.variant, cfg.spectral)


# -------------------------------------------------------------- reports


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    n: int
    loss: float | None = None
    loss_curve: list[dict] = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def confusion_percent(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(rows > 0, 100.0 * self.confusion / np.maximum(rows, 1), 0.0)
        return pct

    @property
    def recall(self) -> dict[str, float | None]:
        rows = self.confusion.sum(axis=1)
        return {
            e.label: (100.0 * self.confusion[e, e] / rows[e]) if rows[e] else None for e in Emotion
        }

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n": self.n,
            "loss": self.loss,
            "best_epoch": self.best_epoch,
            "labels": [e.label for e in Emotion],
            "confusion": self.confusion.tolist(),
            "confusion_percent": np.round(self.confusion_percent, 1).tolist(),
            "recall": self.recall,
            "loss_curve": self.loss_curve,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_confusion_csv(self, path) -> None:
        pct = self.confusion_percent
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred"] + [e.label for e in Emotion] + ["total"])
            for e in Emotion:
                w.writerow([e.label] + [int(c) for c in self.confusion[e]] + [int(self.confusion[e].sum())])
            w.writerow([])
            w.writerow(["true\\pred %"] + [e.label for e in Emotion])
            for e in Emotion:
                w.writerow([e.label] + [f"{v:.1f}" for v in pct[e]])

    def write_loss_csv(self, path) -> None:
        write_loss_curve(path, self.loss_curve)


def write_loss_curve(path, curve: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for row in curve:
            w.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"]), repr(row["val_acc"])])


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def report_from_predictions(y_true, y_pred, loss_value: float | None = None) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred)
    n = int(cm.sum())
    acc = 100.0 * np.trace(cm) / n if n else 0.0
    return EvalReport(float(acc), cm, n, loss_value)


# ------------------------------------------------------------- training


def _rngs(seed: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    init_seq, shuffle_seq, drop_seq = np.random.SeedSequence(seed).spawn(3)
    init_seed = int(init_seq.generate_state(1)[0])
    return init_seed, np.random.default_rng(shuffle_seq), np.random.default_rng(drop_seq)


def _eval_logits(fs: FeatureSet, params: ModelParams, chunk: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(fs), chunk):
        idx = slice(start, start + chunk)
        out.append(logits(fs.take(idx), params, "eval").data)
    return np.concatenate(out, axis=0)


def _objective(z: np.ndarray, labels: np.ndarray, params: ModelParams) -> float:
    return loss(Tensor(z), one_hot(labels, N_CLASSES), params).item()


def _fit_normaliser(fs: FeatureSet, params: ModelParams) -> None:
    # statistics per stream: column i is a different electrode in each hemisphere
    flat = np.stack([x.reshape(-1, x.shape[-1]) for x in fs.inputs])
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    std[std < 1e-8] = 1.0
    params.feature_mean, params.feature_std = mean, std


def fit(
    train_fs: FeatureSet,
    val_fs: FeatureSet | None,
    cfg: ExperimentConfig,
) -> tuple[ModelParams, EvalReport]:
    """Mini-batch Adam on precomputed features; keeps the best-validation-loss parameters."""
    if train_fs.labels is None or len(train_fs) == 0:
        raise LabelError("training data must be labelled and non-empty")
    if val_fs is not None and val_fs.labels is None:
        raise LabelError("validation data must be labelled")
    missing = sorted(set(range(N_CLASSES)) - set(train_fs.labels.tolist()))
    if missing:
        log.warning("training data has no examples of %s", ", ".join(Emotion(i).label for i in missing))

    init_seed, shuffle_rng, drop_rng = _rngs(cfg.seed)
    params = init_params(cfg.model, cfg.variant, train_fs.n_features, init_seed)
    params.seed = cfg.seed
    if cfg.standardize:
        _fit_normaliser(train_fs, params)
    state = AdamState(lr=cfg.lr)
    watch = val_fs if val_fs is not None else train_fs
    y_train = one_hot(train_fs.labels, N_CLASSES)

    best, best_loss, best_epoch, stale = params.copy(), math.inf, 0, 0
    curve = []
    n = len(train_fs)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            z = logits(train_fs.take(idx), params, "train", drop_rng)
            obj = loss(z, y_train[idx], params)
            value = obj.item()
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
            obj.backward()
            try:
                adam_step(params.tensors, None, state)
            except OptimizerError as exc:
                raise NumericalError(f"epoch {epoch}, batch {bi}: {exc}") from None
            total += value * len(idx)
        train_loss = total / n

        z = _eval_logits(watch, params)
        val_loss = _objective(z, watch.labels, params)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        val_acc = 100.0 * float(np.mean(z.argmax(axis=1) == watch.labels))
        curve.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "val_acc": val_acc})

        if val_loss < best_loss:
            best, best_loss, best_epoch, stale = params.copy(), val_loss, epoch, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break

    report = evaluate_features(watch, best)
    report.loss_curve = curve
    report.best_epoch = best_epoch
    return best, report


def train(train_ds: Dataset, val_ds: Dataset | None, cfg: ExperimentConfig) -> tuple[ModelParams, EvalReport]:
    if not train_ds.labelled or (val_ds is not None and not val_ds.labelled):
        raise LabelError("train() needs labelled datasets")
    train_fs = build_features(train_ds, cfg)
    val_fs = build_features(val_ds, cfg) if val_ds is not None else None
    return fit(train_fs, val_fs, cfg)


def evaluate_features(fs: FeatureSet, params: ModelParams) -> EvalReport:
    if fs.labels is None:
        raise LabelError("evaluation needs labels; use predict() for unlabelled data")
    _check_compat(fs, params)
    z = _eval_logits(fs, params)
    pred = z.argmax(axis=1)  # first maximum: lowest class index on ties
    return report_from_predictions(fs.labels, pred, _objective(z, fs.labels, params))


def evaluate(ds: Dataset, params: ModelParams, cfg: ExperimentConfig) -> EvalReport:
    if not ds.labelled:
        raise LabelError("dataset contains unlabelled recordings; use predict() instead")
    return evaluate_features(build_features(ds, cfg), params)


def _check_compat(fs: FeatureSet, params: ModelParams) -> None:
    if len(fs.inputs) != params.n_streams:
        raise CompatibilityError(f"features have {len(fs.inputs)} stream(s), model is {params.variant}")
    if fs.n_features != params.n_features:
        raise CompatibilityError(f"feature width {fs.n_features} does not match checkpoint ({params.n_features})")


@dataclass
class Prediction:
    labels: list[Emotion]
    probabilities: np.ndarray
    ids: list[tuple[str, str]]


def predict(ds: Dataset, params: ModelParams, cfg: ExperimentConfig) -> Prediction:
    if cfg.variant != params.variant:
        raise CompatibilityError(f"config variant {cfg.variant!r} but checkpoint is {params.variant!r}")
    fs = build_features(ds, cfg)
    _check_compat(fs, params)
    probs = softmax_np(_eval_logits(fs, params))
    return Prediction([Emotion(int(i)) for i in probs.argmax(axis=1)], probs, fs.ids)


# ----------------------------------------------------------- comparison


@dataclass
class VariantRow:
    variant: str
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


@dataclass
class Comparison:
    rows: list[VariantRow]
    seeds: list[int]

    @property
    def difference(self) -> float:
        by = {r.variant: r for r in self.rows}
        return by["bi"].mean - by["mono"].mean

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "rows": [
                {"variant": r.variant, "mean": r.mean, "std": r.std, "accuracies": r.accuracies} for r in self.rows
            ],
            "bi_minus_mono": self.difference,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "mean_val_acc", "std_val_acc"] + [f"seed_{s}" for s in self.seeds])
            for r in self.rows:
                w.writerow([r.variant, f"{r.mean:.4f}", f"{r.std:.4f}"] + [f"{a:.4f}" for a in r.accuracies])


def compare_variants(
    train_ds: Dataset,
    val_ds: Dataset,
    base_cfg: ExperimentConfig,
    n_seeds: int,
    variants: Sequence[str] = ("mono", "bi"),
) -> Comparison:
    """Train each variant on identical data and seeds; validation accuracy per seed."""
    if n_seeds < 1:
        raise ConfigError("n_seeds must be >= 1")
    seeds = [base_cfg.seed + i for i in range(n_seeds)]
    prepped_train = [preprocess(r, base_cfg.preproc) for r in train_ds]
    prepped_val = [preprocess(r, base_cfg.preproc) for r in val_ds]
    rows = []
    for variant in variants:
        tr = features_from_prepped(prepped_train, variant, base_cfg.spectral)
        va = features_from_prepped(prepped_val, variant, base_cfg.spectral)
        accs = []
        for s in seeds:
            _, rep = fit(tr, va, base_cfg.with_(variant=variant, seed=s))
            accs.append(rep.accuracy)
        rows.append(VariantRow(variant, accs))
    return Comparison(rows, seeds)
