"""Mastoid re-referencing, causal Butterworth band filtering and delay trimming."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import sosfilt

from .data import Channel, Recording
from .errors import ConfigError, LengthError, StructureError

STAGES = ("raw", "ref", "filt", "prep")


@dataclass(frozen=True)
class PreprocConfig:
    hp_cutoff: float = 1.0
    lp_cutoff: float = 50.0
    filter_order: int = 4
    delay: float = 0.040
    enable_reref: bool = True
    enable_filter: bool = True
    enable_trim: bool = True

    def __post_init__(self):
        if self.filter_order not in (2, 4, 6, 8):
            raise ConfigError(f"filter_order must be one of 2, 4, 6, 8; got {self.filter_order}")
        if not 0 < self.hp_cutoff < self.lp_cutoff:
            raise ConfigError("cutoffs must satisfy 0 < hp_cutoff < lp_cutoff")
        if self.delay < 0:
            raise ConfigError("delay must be >= 0")

    def check_rate(self, fs: float) -> None:
        if self.lp_cutoff >= fs / 2:
            raise ConfigError(f"lp_cutoff {self.lp_cutoff} Hz must be below Nyquist ({fs / 2} Hz)")

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown PreprocConfig fields: {sorted(extra)}")
        return cls(**d)

    to_dict = asdict


@dataclass(frozen=True, eq=False)
class PreprocRecording(Recording):
    stage_tag: str = "raw"

    def __post_init__(self):
        super().__post_init__()
        if self.stage_tag not in STAGES:
            raise ConfigError(f"unknown stage tag {self.stage_tag!r}")

    @classmethod
    def wrap(cls, rec: Recording) -> "PreprocRecording":
        if isinstance(rec, PreprocRecording):
            return rec
        return cls(rec.subject_id, rec.trial_id, rec.label, rec.fs, rec.data, "raw")

    def replace(self, **changes) -> "PreprocRecording":
        kw = dict(
            subject_id=self.subject_id,
            trial_id=self.trial_id,
            label=self.label,
            fs=self.fs,
            data=self.data,
            stage_tag=self.stage_tag,
        )
        kw.update(changes)
        return PreprocRecording(**kw)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


# ------------------------------------------------------------ filter design


def butter_sos(order: int, cutoff: float, fs: float, kind: str) -> np.ndarray:
    """Digital Butterworth low/high-pass as second-order sections.

    Bilinear transform with the cutoff pre-warped, one biquad per
    conjugate pole pair. Rows are ``[b0, b1, b2, 1, a1, a2]``.
    """
    if order % 2 or order < 2:
        raise ConfigError(f"order must be a positive even integer, got {order}")
    if not 0 < cutoff < fs / 2:
        raise ConfigError(f"cutoff {cutoff} Hz outside (0, {fs / 2}) Hz")
    if kind not in ("lowpass", "highpass"):
        raise ConfigError(f"unknown filter kind {kind!r}")
    k = math.tan(math.pi * cutoff / fs)
    sos = np.empty((order // 2, 6))
    for i in range(order // 2):
        q = 1.0 / (2.0 * math.sin((2 * i + 1) * math.pi / (2 * order)))
        norm = 1.0 / (1.0 + k / q + k * k)
        if kind == "lowpass":
            b0 = k * k * norm
            b = (b0, 2.0 * b0, b0)
        else:
            b = (norm, -2.0 * norm, norm)
        sos[i] = (*b, 1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm)
    return sos


def sos_response(sos: np.ndarray, freqs: np.ndarray, fs: float) -> np.ndarray:
    """Complex frequency response of cascaded sections at ``freqs`` Hz."""
    z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=np.float64) / fs)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return h


# ---------------------------------------------------------------- stages


def re_reference(rec: Recording) -> PreprocRecording:
    """Subtract the mastoid mean (A1 + A2) / 2 from every channel.

    The mastoids themselves become ±(A1 − A2)/2, computed so that they are
    exact negatives of each other; a second pass is then a no-op.
    """
    rec = PreprocRecording.wrap(rec)
    x = rec.data
    if x.shape[0] <= max(Channel.A1, Channel.A2):
        raise StructureError("recording lacks mastoid channels A1/A2")
    a1, a2 = x[Channel.A1], x[Channel.A2]
    out = x - (a1 + a2) / 2.0
    out[Channel.A1] = (a1 - a2) / 2.0
    out[Channel.A2] = (a2 - a1) / 2.0
    return rec.replace(data=out, stage_tag="ref")


def band_filter(rec: Recording, cfg: PreprocConfig = PreprocConfig()) -> PreprocRecording:
    """Causal LPF then HPF, each a Butterworth cascade of ``cfg.filter_order``."""
    rec = PreprocRecording.wrap(rec)
    cfg.check_rate(rec.fs)
    if rec.n_samples < 3 * cfg.filter_order:
        raise LengthError(
            f"waveform of {rec.n_samples} samples shorter than 3x filter order ({3 * cfg.filter_order})"
        )
    lp = butter_sos(cfg.filter_order, cfg.lp_cutoff, rec.fs, "lowpass")
    hp = butter_sos(cfg.filter_order, cfg.hp_cutoff, rec.fs, "highpass")
    y = sosfilt(hp, sosfilt(lp, rec.data, axis=-1), axis=-1)
    return rec.replace(data=y, stage_tag="filt")


def delay_samples(cfg: PreprocConfig, fs: float) -> int:
    return round_half_away(cfg.delay * fs)


def trim_delay(rec: Recording, cfg: PreprocConfig = PreprocConfig()) -> PreprocRecording:
    rec = PreprocRecording.wrap(rec)
    d = delay_samples(cfg, rec.fs)
    if d >= rec.n_samples:
        raise LengthError(f"delay exceeds recording ({d} >= {rec.n_samples} samples)")
    return rec.replace(data=rec.data[:, d:], stage_tag="prep")


def preprocess(rec: Recording, cfg: PreprocConfig = PreprocConfig()) -> PreprocRecording:
    out = PreprocRecording.wrap(rec)
    if cfg.enable_reref:
        out = re_reference(out)
    if cfg.enable_filter:
        out = band_filter(out, cfg)
    if cfg.enable_trim:
        out = trim_delay(out, cfg)
    return out
