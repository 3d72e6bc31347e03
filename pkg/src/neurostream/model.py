"""Two-stream (Bi-Hemispheric) classifier and its single-stream baseline.

Per stream: conv1d -> maxpool1d -> dropout -> lstm (final hidden state)
-> dropout. Stream vectors are concatenated and passed through a ReLU
dense layer (L2-regularised) and a 6-way output projection.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, concat, conv1d, dense, dropout, l2_penalty, lstm, maxpool1d, softmax_xent
from .autodiff.checkpoint import load_checkpoint, save_checkpoint
from .autodiff.init import glorot_uniform, lstm_bias
from .autodiff.layers import softmax_np
from .data import N_CLASSES
from .errors import CompatibilityError, ConfigError, ShapeError
from .hemisplit import HemiPair
from .spectral import SpectralTensor

VARIANTS = ("mono", "bi")


@dataclass(frozen=True)
class ModelConfig:
    conv_filters: int = 32
    conv_kernel: int = 3
    pool: int = 2
    lstm_units: int = 64
    dense_units: int = 64
    dropout_rate: float = 0.5
    l2_lambda: float = 1e-3
    n_classes: int = N_CLASSES

    def __post_init__(self):
        for name in ("conv_filters", "conv_kernel", "pool", "lstm_units", "dense_units"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be >= 0")
        if self.n_classes != N_CLASSES:
            raise ConfigError(f"n_classes must be {N_CLASSES}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(extra)}")
        return cls(**d)

    to_dict = asdict

    @property
    def min_frames(self) -> int:
        return self.conv_kernel * self.pool


def _streams(variant: str) -> tuple[str, ...]:
    if variant == "bi":
        return ("left", "right")
    if variant == "mono":
        return ("stream",)
    raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")


def param_shapes(cfg: ModelConfig, variant: str, n_features: int) -> dict[str, tuple[int, ...]]:
    """Shapes of every trainable tensor; ``n_features`` is the per-stream input width."""
    k, fo, h, d = cfg.conv_kernel, cfg.conv_filters, cfg.lstm_units, cfg.dense_units
    shapes = {}
    streams = _streams(variant)
    for s in streams:
        shapes[f"{s}.conv.w"] = (k, n_features, fo)
        shapes[f"{s}.conv.b"] = (fo,)
        shapes[f"{s}.lstm.W"] = (fo, 4 * h)
        shapes[f"{s}.lstm.U"] = (h, 4 * h)
        shapes[f"{s}.lstm.b"] = (4 * h,)
    shapes["head.dense.w"] = (len(streams) * h, d)
    shapes["head.dense.b"] = (d,)
    shapes["head.out.w"] = (d, cfg.n_classes)
    shapes["head.out.b"] = (cfg.n_classes,)
    return shapes


def param_count(cfg: ModelConfig, n_features: int, variant: str = "bi") -> int:
    """Closed-form trainable scalar count."""
    k, fo, h, d, c = cfg.conv_kernel, cfg.conv_filters, cfg.lstm_units, cfg.dense_units, cfg.n_classes
    conv = k * n_features * fo + fo
    rec = 4 * (fo * h + h * h + h)
    n_streams = len(_streams(variant))
    head = n_streams * h * d + d + d * c + c
    return n_streams * (conv + rec) + head


@dataclass
class ModelParams:
    variant: str
    cfg: ModelConfig
    n_features: int
    tensors: dict[str, Tensor]
    seed: int | None = None
    # per-stream, per-feature standardisation fitted on the training set,
    # shape (n_streams, n_features); identity when unset
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        expected = param_shapes(self.cfg, self.variant, self.n_features)
        if set(expected) != set(self.tensors):
            raise CompatibilityError(f"parameter names {sorted(self.tensors)} != {sorted(expected)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise CompatibilityError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @property
    def streams(self) -> tuple[str, ...]:
        return _streams(self.variant)

    @property
    def n_streams(self) -> int:
        return len(self.streams)

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def l2_weights(self) -> list[Tensor]:
        return [self.tensors["head.dense.w"]]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.variant,
            self.cfg,
            self.n_features,
            {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k) for k, v in self.tensors.items()},
            self.seed,
            None if self.feature_mean is None else self.feature_mean.copy(),
            None if self.feature_std is None else self.feature_std.copy(),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.tensors.items()}

    def normalise(self, x: np.ndarray, stream: int = 0) -> np.ndarray:
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean[stream]) / self.feature_std[stream]

    def save(self, path, extra_meta: dict | None = None) -> None:
        arrays = dict(self.arrays())
        meta = {
            "variant": self.variant,
            "model": self.cfg.to_dict(),
            "n_features": self.n_features,
            "seed": self.seed,
            "normalised": self.feature_mean is not None,
            "buffers": ["norm.mean", "norm.std"] if self.feature_mean is not None else [],
        }
        meta.update(extra_meta or {})
        if self.feature_mean is not None:
            arrays["norm.mean"] = self.feature_mean
            arrays["norm.std"] = self.feature_std
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> tuple["ModelParams", dict]:
        arrays, meta = load_checkpoint(path)
        try:
            cfg = ModelConfig.from_dict(meta["model"])
            variant, n_features = meta["variant"], int(meta["n_features"])
        except (KeyError, TypeError) as exc:
            raise CompatibilityError(f"{path}: checkpoint metadata incomplete ({exc})") from None
        mean = arrays.pop("norm.mean", None)
        std = arrays.pop("norm.std", None)
        tensors = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(variant, cfg, n_features, tensors, meta.get("seed"), mean, std), meta


def init_params(cfg: ModelConfig, variant: str, n_features: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, LSTM forget bias +1."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg, variant, n_features).items():
        if name.endswith("conv.w"):
            k, fi, fo = shape
            arr = glorot_uniform(rng, shape, k * fi, k * fo)
        elif name.endswith("lstm.W") or name.endswith("lstm.U"):
            arr = glorot_uniform(rng, shape, shape[0], shape[1] // 4)
        elif name.endswith("lstm.b"):
            arr = lstm_bias(cfg.lstm_units)
        elif name.endswith(".w"):
            arr = glorot_uniform(rng, shape, *shape)
        else:
            arr = np.zeros(shape)
        tensors[name] = Tensor(arr, requires_grad=True, name=name)
    return ModelParams(variant, cfg, n_features, tensors, seed)


# --------------------------------------------------------------- forward


def _stream(x: Tensor, params: ModelParams, prefix: str, mode: str, rng) -> Tensor:
    cfg = params.cfg
    p = params.tensors
    h = conv1d(x, p[f"{prefix}.conv.w"], p[f"{prefix}.conv.b"])
    h = maxpool1d(h, cfg.pool)
    h = dropout(h, cfg.dropout_rate, mode, rng)
    h = lstm(h, p[f"{prefix}.lstm.W"], p[f"{prefix}.lstm.U"], p[f"{prefix}.lstm.b"])
    return dropout(h, cfg.dropout_rate, mode, rng)


def _check_input(x: np.ndarray, params: ModelParams, stream: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != params.n_features:
        raise ShapeError(f"input {x.shape} does not match model feature width {params.n_features}")
    if x.shape[1] < params.cfg.min_frames:
        raise ShapeError(
            f"too few frames: {x.shape[1]} < conv_kernel*pool = {params.cfg.min_frames}"
        )
    return params.normalise(x, stream)


def logits(
    inputs: tuple[np.ndarray, ...],
    params: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Batched logits (B, 6); ``inputs`` holds one (B, T, F) array per stream."""
    if len(inputs) != params.n_streams:
        raise ShapeError(f"{params.variant} model takes {params.n_streams} stream(s), got {len(inputs)}")
    vecs = [
        _stream(Tensor(_check_input(x, params, i)), params, prefix, mode, rng)
        for i, (x, prefix) in enumerate(zip(inputs, params.streams))
    ]
    z = vecs[0] if len(vecs) == 1 else concat(vecs, axis=-1)
    p = params.tensors
    z = dense(z, p["head.dense.w"], p["head.dense.b"], "relu")
    return dense(z, p["head.out.w"], p["head.out.b"])


def probabilities(inputs, params: ModelParams, mode: str = "eval", rng=None) -> np.ndarray:
    return softmax_np(logits(inputs, params, mode, rng).data)


def forward_bi(pair: HemiPair, params: ModelParams, mode: str = "eval", rng=None) -> np.ndarray:
    """Class probabilities (6,) for one hemisphere pair."""
    if params.variant != "bi":
        raise CompatibilityError("forward_bi needs bi-variant parameters")
    return probabilities((pair.left.data, pair.right.data), params, mode, rng)[0]


def forward_mono(features: SpectralTensor, params: ModelParams, mode: str = "eval", rng=None) -> np.ndarray:
    if params.variant != "mono":
        raise CompatibilityError("forward_mono needs mono-variant parameters")
    return probabilities((features.data,), params, mode, rng)[0]


def loss(batch_logits: Tensor, targets, params: ModelParams) -> Tensor:
    """Cross-entropy of the softmax outputs plus ``l2_lambda * ||W_dense||²``."""
    data = softmax_xent(batch_logits, targets)
    if params.cfg.l2_lambda == 0:
        return data
    return data + l2_penalty(params.l2_weights(), params.cfg.l2_lambda)


def layer_table(cfg: ModelConfig, variant: str, n_features: int) -> list[tuple[str, tuple[int, ...], int]]:
    return [(name, shape, int(np.prod(shape))) for name, shape in param_shapes(cfg, variant, n_features).items()]
