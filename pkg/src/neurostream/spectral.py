"""Radix-2 FFT and framed magnitude-spectrogram features."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Channel, Recording
from .errors import ConfigError, LengthError, ParseError

FEATURE_KINDS = ("magnitude", "log_magnitude")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x, inverse: bool = False) -> np.ndarray:
    """Iterative decimation-in-time FFT along the last axis.

    Forward uses ``exp(-2πi kn/N)``; the inverse uses the conjugate kernel and
    divides by ``N``. Leading axes are transformed independently.
    """
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim == 0:
        raise LengthError("fft needs at least one axis")
    n = a.shape[-1]
    if not _is_pow2(n):
        raise LengthError(f"fft length must be a power of two, got {n}")
    a = a[..., _bit_reverse(n)]
    lead = a.shape[:-1]
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = a.reshape(*lead, n // m, m)
        even = blocks[..., :half]
        odd = blocks[..., half:] * w
        a = np.concatenate((even + odd, even - odd), axis=-1).reshape(*lead, n)
        m *= 2
    if inverse:
        a = a / n
    return a


def naive_dft(x, inverse: bool = False) -> np.ndarray:
    """O(N²) reference transform for any length."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    kernel = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    out = x @ kernel.T
    return out / n if inverse else out


@dataclass(frozen=True)
class SpectralConfig:
    window_len: int = 256
    hop: int = 128
    band: tuple[float, float] = (1.0, 50.0)
    feature_kind: str = "log_magnitude"

    def __post_init__(self):
        object.__setattr__(self, "band", tuple(float(b) for b in self.band))
        if not _is_pow2(self.window_len) or self.window_len < 2:
            raise ConfigError(f"window_len must be a power of two >= 2, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ConfigError("hop must satisfy 0 < hop <= window_len")
        if len(self.band) != 2 or not self.band[0] < self.band[1]:
            raise ConfigError(f"band must be [f_lo, f_hi] with f_lo < f_hi, got {self.band}")
        if self.feature_kind not in FEATURE_KINDS:
            raise ConfigError(f"feature_kind must be one of {FEATURE_KINDS}")

    def check_rate(self, fs: float) -> None:
        if self.band[1] > fs / 2:
            raise ConfigError(f"band upper edge {self.band[1]} Hz above Nyquist {fs / 2} Hz")

    def n_frames(self, n: int) -> int:
        if n < self.window_len:
            raise LengthError(f"signal shorter than window ({n} < {self.window_len})")
        return (n - self.window_len) // self.hop + 1

    def bin_indices(self, fs: float) -> np.ndarray:
        k = np.arange(self.window_len // 2 + 1)
        centers = k * fs / self.window_len
        keep = k[(centers >= self.band[0]) & (centers <= self.band[1])]
        if keep.size == 0:
            raise ConfigError(f"no FFT bins inside band {self.band} at fs={fs}, window={self.window_len}")
        return keep

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown SpectralConfig fields: {sorted(extra)}")
        return cls(**d)

    to_dict = asdict


def hann(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    m = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * m / (n - 1)))


def frame_signal(x, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Hann-weighted frames of ``x`` along its last axis: shape (..., T, window_len)."""
    x = np.asarray(x, dtype=np.float64)
    t = cfg.n_frames(x.shape[-1])
    starts = np.arange(t) * cfg.hop
    idx = starts[:, None] + np.arange(cfg.window_len)[None, :]
    return x[..., idx] * hann(cfg.window_len)


@dataclass(frozen=True, eq=False)
class SpectralTensor:
    """T × (channels · bins) features, frame-major then channel then bin."""

    channels: tuple[Channel, ...]
    bins: np.ndarray
    data: np.ndarray
    fs: float

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def block(self, ch: Channel) -> np.ndarray:
        """(T, n_bins) features of one channel."""
        i = self.channels.index(ch)
        return self.data[:, i * self.n_bins : (i + 1) * self.n_bins]

    def __eq__(self, other):
        if not isinstance(other, SpectralTensor):
            return NotImplemented
        return (
            self.channels == other.channels
            and np.array_equal(self.bins, other.bins)
            and np.array_equal(self.data, other.data)
            and self.fs == other.fs
        )

    __hash__ = None


def spectral_features(
    rec: Recording,
    cfg: SpectralConfig = SpectralConfig(),
    channel_subset: Sequence[Channel] | None = None,
) -> SpectralTensor:
    """Band-limited STFT magnitudes for ``channel_subset`` (default: all 21)."""
    channels = tuple(Channel) if channel_subset is None else tuple(Channel(c) for c in channel_subset)
    if not channels:
        raise ConfigError("channel subset is empty")
    cfg.check_rate(rec.fs)
    keep = cfg.bin_indices(rec.fs)
    frames = frame_signal(rec.data[list(channels)], cfg)  # (C, T, W)
    mag = np.abs(fft(frames)[..., keep])  # (C, T, B)
    if cfg.feature_kind == "log_magnitude":
        mag = np.log1p(mag)
    t = mag.shape[1]
    data = np.ascontiguousarray(mag.transpose(1, 0, 2).reshape(t, -1))
    data.setflags(write=False)
    bins = keep * rec.fs / cfg.window_len
    return SpectralTensor(channels, bins, data, rec.fs)


# ----------------------------------------------------- features.bin I/O
#
# little-endian container:
#   b"NSFT" | u16 version | u32 n_records
#   per record: u32 T | u32 n_channels | u32 n_bins | f64 fs | i8 label (-1 = none)
#               u8[n_channels] channel ids | f64[n_bins] bin centres
#               f64[T * n_channels * n_bins] data, row-major

FEATURES_MAGIC = b"NSFT"
FEATURES_VERSION = 1


def write_features(path: str | Path, tensors: Sequence[SpectralTensor], labels: Sequence[int | None] | None = None) -> None:
    labels = list(labels) if labels is not None else [None] * len(tensors)
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC + struct.pack("<HI", FEATURES_VERSION, len(tensors)))
        for st, y in zip(tensors, labels):
            fh.write(struct.pack("<IIIdb", st.frames, len(st.channels), st.n_bins, st.fs, -1 if y is None else int(y)))
            fh.write(np.asarray([int(c) for c in st.channels], dtype="<u1").tobytes())
            fh.write(np.asarray(st.bins, dtype="<f8").tobytes())
            fh.write(np.asarray(st.data, dtype="<f8").tobytes())


def read_features(path: str | Path) -> tuple[list[SpectralTensor], list[int | None]]:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURES_MAGIC:
        raise ParseError(f"{path}: not a features file")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != FEATURES_VERSION:
        raise ParseError(f"{path}: unsupported features version {version}")
    off = 10
    tensors, labels = [], []
    head = struct.Struct("<IIIdb")
    for _ in range(count):
        t, nc, nb, fs, y = head.unpack_from(raw, off)
        off += head.size
        chans = tuple(Channel(int(c)) for c in np.frombuffer(raw, "<u1", nc, off))
        off += nc
        bins = np.frombuffer(raw, "<f8", nb, off).copy()
        off += 8 * nb
        data = np.frombuffer(raw, "<f8", t * nc * nb, off).reshape(t, nc * nb).copy()
        off += 8 * t * nc * nb
        tensors.append(SpectralTensor(chans, bins, data, fs))
        labels.append(None if y < 0 else int(y))
    return tensors, labels
