"""EEG recordings, the canonical CSV layout, and labelled synthetic data.

A CSV file holds one row per (subject, trial, channel)::

    subject,trial,label,channel,s0,s1,...,s{n-1}

Sampling rate, units and split live in a sidecar manifest::

    {"fs_hz": 300.0, "units": "microvolt", "split": "train"}

Unlabelled rows carry the label ``unknown``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, LabelError, ParseError, SchemaError

UNKNOWN_LABEL = "unknown"
UNITS = "microvolt"
SPLITS = ("train", "validation", "test")


class Channel(enum.IntEnum):
    Fp1 = 0
    Fp2 = 1
    F7 = 2
    F3 = 3
    Fz = 4
    F4 = 5
    F8 = 6
    T3 = 7
    C3 = 8
    Cz = 9
    C4 = 10
    T4 = 11
    T5 = 12
    P3 = 13
    Pz = 14
    P4 = 15
    T6 = 16
    O1 = 17
    O2 = 18
    A1 = 19
    A2 = 20

    @classmethod
    def parse(cls, name: str) -> "Channel":
        try:
            return _CHANNEL_LOOKUP[name.strip().lower()]
        except KeyError:
            raise SchemaError(f"unknown channel {name!r}") from None


_CHANNEL_LOOKUP = {c.name.lower(): c for c in Channel}
N_CHANNELS = len(Channel)

# Homologous left/right electrode pairs; the midline (Fz, Cz, Pz) maps to itself.
HOMOLOGOUS = (
    (Channel.Fp1, Channel.Fp2),
    (Channel.F7, Channel.F8),
    (Channel.C3, Channel.C4),
    (Channel.P3, Channel.P4),
    (Channel.O1, Channel.O2),
    (Channel.F3, Channel.F4),
    (Channel.T3, Channel.T4),
    (Channel.T5, Channel.T6),
    (Channel.A1, Channel.A2),
)
MASTOIDS = (Channel.A1, Channel.A2)
LEFT_LATERAL = tuple(a for a, _ in HOMOLOGOUS if a not in MASTOIDS)
RIGHT_LATERAL = tuple(b for _, b in HOMOLOGOUS if b not in MASTOIDS)


def mirror_index() -> np.ndarray:
    """Row permutation that swaps every channel with its homologue."""
    perm = np.arange(N_CHANNELS)
    for a, b in HOMOLOGOUS:
        perm[a], perm[b] = b, a
    return perm


class Emotion(enum.IntEnum):
    Anger = 0
    Disgust = 1
    Fear = 2
    Joy = 3
    Sadness = 4
    Surprise = 5

    @classmethod
    def parse(cls, label: str) -> "Emotion":
        for e in cls:
            if e.name.lower() == label.strip().lower():
                return e
        raise LabelError(f"unknown label {label!r}")

    @property
    def label(self) -> str:
        return self.name.lower()


N_CLASSES = len(Emotion)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject/trial: a (21, n_samples) array of µV samples in Channel order."""

    subject_id: str
    trial_id: str
    label: Emotion | None
    fs: float
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != N_CHANNELS:
            raise SchemaError(
                f"{self.subject_id},{self.trial_id}: expected {N_CHANNELS} channels, "
                f"got array of shape {data.shape}"
            )
        if data.shape[1] < 1:
            raise SchemaError(f"{self.subject_id},{self.trial_id}: empty waveforms")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ConfigError(f"sampling rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(data)):
            raise ParseError(f"{self.subject_id},{self.trial_id}: non-finite sample")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def channel(self, ch: Channel | str) -> np.ndarray:
        if isinstance(ch, str):
            ch = Channel.parse(ch)
        return self.data[ch]

    @property
    def channels(self) -> dict[Channel, np.ndarray]:
        return {c: self.data[c] for c in Channel}

    def replace(self, **changes) -> "Recording":
        kw = dict(
            subject_id=self.subject_id,
            trial_id=self.trial_id,
            label=self.label,
            fs=self.fs,
            data=self.data,
        )
        kw.update(changes)
        return type(self)(**kw)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.trial_id == other.trial_id
            and self.label == other.label
            and self.fs == other.fs
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    recordings: tuple[Recording, ...]
    split_tag: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        if self.split_tag not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split_tag!r}")
        if not self.recordings and self.split_tag != "test":
            raise SchemaError("empty dataset")
        if len({r.fs for r in self.recordings}) > 1:
            raise SchemaError("inconsistent sampling rate")

    def __len__(self):
        return len(self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    def __getitem__(self, i):
        return self.recordings[i]

    @property
    def fs(self) -> float:
        return self.recordings[0].fs

    @property
    def labels(self) -> np.ndarray:
        if any(r.label is None for r in self.recordings):
            raise LabelError("dataset contains unlabelled recordings")
        return np.array([int(r.label) for r in self.recordings], dtype=np.int64)

    @property
    def labelled(self) -> bool:
        return all(r.label is not None for r in self.recordings)

    def with_labels(self, labels: Sequence[int | Emotion | None]) -> "Dataset":
        if len(labels) != len(self.recordings):
            raise LabelError("label count does not match recording count")
        recs = [
            r.replace(label=None if y is None else Emotion(int(y)))
            for r, y in zip(self.recordings, labels)
        ]
        return Dataset(recs, self.split_tag)

    def map(self, fn) -> "Dataset":
        return Dataset([fn(r) for r in self.recordings], self.split_tag)


# ---------------------------------------------------------------- CSV I/O


def read_manifest(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            m = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path}: {exc}") from None
    try:
        fs = float(m["fs_hz"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"manifest {path}: missing or invalid fs_hz") from None
    units = m.get("units", UNITS)
    if units != UNITS:
        raise ConfigError(f"manifest {path}: units must be {UNITS!r}, got {units!r}")
    split = m.get("split", "train")
    if split not in SPLITS:
        raise ConfigError(f"manifest {path}: unknown split {split!r}")
    return {"fs_hz": fs, "units": units, "split": split}


def write_manifest(path: str | Path, fs: float, split: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"fs_hz": float(fs), "units": UNITS, "split": split}, fh, indent=2)
        fh.write("\n")


def default_manifest_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def _parse_label(s: str) -> Emotion | None:
    if s.strip().lower() == UNKNOWN_LABEL:
        return None
    return Emotion.parse(s)


def load_csv(path: str | Path, manifest: str | Path | None = None) -> Dataset:
    """Read a canonical CSV plus its manifest into a Dataset.

    Groups are returned in order of first appearance; channels within a
    group are reordered to the Channel enumeration.
    """
    meta = read_manifest(manifest if manifest is not None else default_manifest_path(path))
    groups: dict[tuple[str, str], dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if [h.strip() for h in header[:4]] != ["subject", "trial", "label", "channel"]:
            raise SchemaError(f"{path}: header must start with subject,trial,label,channel")
        n_cols = len(header) - 4
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 5:
                raise ParseError(f"row {lineno}: too few columns")
            subject, trial, label, chan = (c.strip() for c in row[:4])
            cells = row[4:]
            if len(cells) > n_cols:
                raise ParseError(f"row {lineno}: more samples than header columns")
            while cells and cells[-1].strip() == "":
                cells.pop()
            try:
                samples = np.array([float(c) for c in cells], dtype=np.float64)
            except ValueError:
                raise ParseError(f"row {lineno}: non-numeric sample") from None
            if samples.size == 0:
                raise ParseError(f"row {lineno}: no samples")
            if not np.all(np.isfinite(samples)):
                raise ParseError(f"row {lineno}: non-finite sample")
            ch = Channel.parse(chan)
            g = groups.setdefault((subject, trial), {"label": label, "rows": {}})
            if g["label"].strip().lower() != label.lower():
                raise LabelError(f"{subject},{trial}: conflicting labels {g['label']!r} and {label!r}")
            if ch in g["rows"]:
                raise SchemaError(f"duplicate channel row {subject},{trial},{ch.name}")
            g["rows"][ch] = samples

    recs = []
    for (subject, trial), g in groups.items():
        for ch in Channel:
            if ch not in g["rows"]:
                raise SchemaError(f"missing channel row {subject},{trial},{ch.name}")
        lengths = {len(v) for v in g["rows"].values()}
        if len(lengths) != 1:
            raise SchemaError(f"{subject},{trial}: channels have unequal lengths {sorted(lengths)}")
        data = np.stack([g["rows"][ch] for ch in Channel])
        recs.append(Recording(subject, trial, _parse_label(g["label"]), meta["fs_hz"], data))
    return Dataset(recs, meta["split"])


def save_csv(ds: Dataset, path: str | Path, manifest: str | Path | None = None) -> None:
    """Write ``ds`` in the canonical layout; values use 17 significant digits."""
    if len(ds.recordings) == 0:
        raise SchemaError("empty dataset")
    if len({r.fs for r in ds.recordings}) > 1:
        raise SchemaError("inconsistent sampling rate")
    n_max = max(r.n_samples for r in ds.recordings)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "trial", "label", "channel"] + [f"s{i}" for i in range(n_max)])
        for r in ds.recordings:
            label = UNKNOWN_LABEL if r.label is None else r.label.label
            pad = [""] * (n_max - r.n_samples)
            for ch in Channel:
                w.writerow(
                    [r.subject_id, r.trial_id, label, ch.name]
                    + [format(v, ".17g") for v in r.data[ch].tolist()]
                    + pad
                )
    write_manifest(manifest if manifest is not None else default_manifest_path(path), ds.fs, ds.split_tag)


# ---------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for labelled synthetic EEG.

    Class ``k`` carries a unit sinusoid at ``carriers[k]`` Hz on every
    non-mastoid channel; left lateral channels are scaled by
    ``1 + asymmetry[k]`` and right lateral ones by ``1 - asymmetry[k]``.
    ``active`` restricts the class signal to a fraction of the recording,
    leaving only noise elsewhere.
    """

    n_subjects: int = 4
    n_reps: int = 1
    fs: float = 300.0
    duration: float = 15.0
    carriers: tuple[float, ...] = (4.0, 8.0, 12.0, 18.0, 25.0, 35.0)
    asymmetry: tuple[float, ...] = (0.0,) * N_CLASSES
    noise: float = 0.0
    active: tuple[float, float] = (0.0, 1.0)
    split: str = "train"
    subject_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "carriers", tuple(float(f) for f in self.carriers))
        object.__setattr__(self, "asymmetry", tuple(float(a) for a in self.asymmetry))
        object.__setattr__(self, "active", tuple(float(a) for a in self.active))
        if self.n_subjects < 1 or self.n_reps < 1:
            raise ConfigError("n_subjects and n_reps must be >= 1")
        if self.fs <= 0 or self.duration <= 0:
            raise ConfigError("fs and duration must be positive")
        if len(self.carriers) != N_CLASSES or len(self.asymmetry) != N_CLASSES:
            raise ConfigError(f"carriers and asymmetry need {N_CLASSES} entries")
        for f in self.carriers:
            if not 1.0 < f < 50.0:
                raise ConfigError(f"carrier {f} Hz outside (1, 50) Hz would be removed by the band-pass")
        if any(a < 0 for a in self.asymmetry):
            raise ConfigError("asymmetry gains must be >= 0")
        if self.noise < 0:
            raise ConfigError("noise sigma must be >= 0")
        lo, hi = self.active
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError(f"active window {self.active} must satisfy 0 <= lo < hi <= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown SynthSpec fields: {sorted(extra)}")
        return cls(**d)

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration * self.fs + 0.5))


def _class_gains(alpha: float) -> np.ndarray:
    g = np.ones(N_CHANNELS)
    g[list(LEFT_LATERAL)] = 1.0 + alpha
    g[list(RIGHT_LATERAL)] = 1.0 - alpha
    g[list(MASTOIDS)] = 0.0
    return g


def gen_synthetic(spec: SynthSpec, seed: int) -> Dataset:
    """Balanced synthetic dataset; a pure function of ``(spec, seed)``."""
    rng = np.random.default_rng(seed)
    n = spec.n_samples
    t = np.arange(n) / spec.fs
    lo, hi = spec.active
    envelope = np.zeros(n)
    envelope[int(math.floor(lo * n + 0.5)) : int(math.floor(hi * n + 0.5))] = 1.0
    recs = []
    for s in range(spec.n_subjects):
        subject = f"s{s + 1 + spec.subject_offset:02d}"
        trial = 0
        for emo in Emotion:
            carrier = np.sin(2.0 * np.pi * spec.carriers[emo] * t) * envelope
            gains = _class_gains(spec.asymmetry[emo])
            for _ in range(spec.n_reps):
                trial += 1
                data = gains[:, None] * carrier[None, :]
                if spec.noise > 0:
                    data = data + spec.noise * rng.standard_normal((N_CHANNELS, n))
                recs.append(Recording(subject, f"t{trial:02d}", emo, spec.fs, data))
    return Dataset(recs, spec.split)


def recordings_equal(a: Iterable[Recording], b: Iterable[Recording]) -> bool:
    a, b = list(a), list(b)
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    return a.split_tag == b.split_tag and recordings_equal(a.recordings, b.recordings)
