"""Bi-hemispheric EEG emotion classification: pre-processing, spectral
features, hemisphere split, a two-stream recurrent classifier and
per-interval temporal analysis."""

__version__ = "0.1.0"

from .data import Channel, Dataset, Emotion, Recording, SynthSpec, gen_synthetic, load_csv, save_csv
from .harness import ExperimentConfig, compare_variants, evaluate, predict, train
from .hemisplit import HemiPair, partition_check, split
from .model import ModelConfig, ModelParams, forward_bi, forward_mono, init_params, param_count
from .preprocess import PreprocConfig, band_filter, preprocess, re_reference, trim_delay
from .spectral import SpectralConfig, SpectralTensor, fft, frame_signal, spectral_features
from .temporal import make_intervals, slice_recording, temporal_scan
