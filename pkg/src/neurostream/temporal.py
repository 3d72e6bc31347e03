"""Eight-way temporal segmentation and the per-interval train/eval scan."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import IntervalError, NeurostreamError
from .harness import ExperimentConfig, evaluate_features, features_from_prepped, fit
from .preprocess import PreprocRecording, preprocess, round_half_away
from .spectral import SpectralConfig

log = logging.getLogger(__name__)

N_INTERVALS = 8
INTERVAL_WINDOW = 128
INTERVAL_HOP = 64


@dataclass(frozen=True)
class IntervalSpec:
    j: int
    start: float
    end: float
    start_sample: int
    end_sample: int

    @property
    def n_samples(self) -> int:
        return self.end_sample - self.start_sample


def make_intervals(total_time: float, fs: float, n_samples: int | None = None) -> list[IntervalSpec]:
    """Split ``[0, total_time)`` into eight equal half-open intervals.

    Sample bounds are ``round(time * fs)`` clipped to ``n_samples``; the last
    interval always ends at ``n_samples`` so the ranges tile every index.
    """
    if not total_time > 0:
        raise IntervalError("total_time must be positive")
    n = round_half_away(total_time * fs) if n_samples is None else int(n_samples)
    bounds = [min(max(round_half_away(j * total_time / N_INTERVALS * fs), 0), n) for j in range(N_INTERVALS)]
    bounds.append(n)
    return [
        IntervalSpec(
            j=j,
            start=j * total_time / N_INTERVALS,
            end=(j + 1) * total_time / N_INTERVALS,
            start_sample=bounds[j],
            end_sample=bounds[j + 1],
        )
        for j in range(N_INTERVALS)
    ]


def intervals_for(rec: PreprocRecording) -> list[IntervalSpec]:
    return make_intervals(rec.n_samples / rec.fs, rec.fs, rec.n_samples)


def slice_recording(rec: PreprocRecording, iv: IntervalSpec) -> PreprocRecording:
    rec = PreprocRecording.wrap(rec)
    if not 0 <= iv.start_sample <= iv.end_sample <= rec.n_samples:
        raise IntervalError(f"interval {iv.j} [{iv.start_sample}, {iv.end_sample}) outside recording of {rec.n_samples}")
    if iv.n_samples == 0:
        raise IntervalError(f"interval {iv.j} is empty")
    return rec.replace(data=rec.data[:, iv.start_sample : iv.end_sample])


MIN_INTERVAL_FRAMES = 4


def interval_spectral(cfg: SpectralConfig, n_samples: int) -> SpectralConfig:
    """Window 128 / hop 64 for slices that give fewer than four frames at ``cfg``.

    An eighth of a 15 s recording at 300 Hz (561 samples) yields only three
    256-sample frames, too few for the conv + pool front end.
    """
    if n_samples < cfg.window_len + (MIN_INTERVAL_FRAMES - 1) * cfg.hop:
        return replace(cfg, window_len=INTERVAL_WINDOW, hop=INTERVAL_HOP)
    return cfg


@dataclass
class ScanEntry:
    variant: str
    j: int
    train_acc: float | None
    val_acc: float | None
    status: str = "ok"
    reason: str = ""
    per_seed: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class TemporalScanReport:
    entries: list[ScanEntry]

    def for_variant(self, variant: str) -> list[ScanEntry]:
        return sorted((e for e in self.entries if e.variant == variant), key=lambda e: e.j)

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(e.variant for e in self.entries))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "j", "train_acc", "val_acc", "status"])
            for e in self.entries:
                fmt = lambda v: "" if v is None else f"{v:.4f}"
                status = e.status if not e.reason else f"{e.status}: {e.reason}"
                w.writerow([e.variant, e.j, fmt(e.train_acc), fmt(e.val_acc), status])

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "variant": e.variant,
                    "j": e.j,
                    "train_acc": e.train_acc,
                    "val_acc": e.val_acc,
                    "status": e.status,
                    "reason": e.reason,
                }
                for e in self.entries
            ]
        }


def interval_seed(base: int, j: int) -> int:
    return int(np.random.SeedSequence([base, j]).generate_state(1)[0] % (2**31))


def temporal_scan(
    train: Dataset,
    val: Dataset,
    cfg: ExperimentConfig,
    seeds: Sequence[int] | None = None,
    variants: Sequence[str] = ("mono", "bi"),
) -> TemporalScanReport:
    """Train and score a fresh model on each eighth of the pre-processed recordings.

    Accuracies are averaged over ``seeds`` (default: ``[cfg.seed]``); each
    (seed, j) pair gets its own initialisation derived from the seed.
    """
    seeds = [cfg.seed] if seeds is None else list(seeds)
    prep_train = [preprocess(r, cfg.preproc) for r in train]
    prep_val = [preprocess(r, cfg.preproc) for r in val]
    iv_train = [intervals_for(r) for r in prep_train]
    iv_val = [intervals_for(r) for r in prep_val]

    entries = []
    for variant in variants:
        for j in range(N_INTERVALS):
            try:
                tr_slices = [slice_recording(r, ivs[j]) for r, ivs in zip(prep_train, iv_train)]
                va_slices = [slice_recording(r, ivs[j]) for r, ivs in zip(prep_val, iv_val)]
                shortest = min(s.n_samples for s in tr_slices + va_slices)
                spec = interval_spectral(cfg.spectral, shortest)
                tr = features_from_prepped(tr_slices, variant, spec)
                va = features_from_prepped(va_slices, variant, spec)
                frames = min(tr.frames, va.frames)
                if frames < cfg.model.min_frames:
                    raise IntervalError(
                        f"{frames} frames per interval, model needs {cfg.model.min_frames}"
                    )
                runs = []
                for s in seeds:
                    run_cfg = cfg.with_(variant=variant, seed=interval_seed(s, j))
                    params, rep = fit(tr, va, run_cfg)
                    runs.append((evaluate_features(tr, params).accuracy, rep.accuracy))
            except NeurostreamError as exc:
                log.warning("interval %d (%s) skipped: %s", j, variant, exc)
                entries.append(ScanEntry(variant, j, None, None, "skipped", str(exc)))
                continue
            entries.append(
                ScanEntry(
                    variant,
                    j,
                    float(np.mean([r[0] for r in runs])),
                    float(np.mean([r[1] for r in runs])),
                    per_seed=runs,
                )
            )
    return TemporalScanReport(entries)
