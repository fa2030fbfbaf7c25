"""Speech spectrogram decoding from intracranial EEG.

The package is organized as a pipeline:

- :mod:`neuroincept.dsp` turns raw multichannel EEG into standardized
  high-gamma envelope features with temporal context stacking.
- :mod:`neuroincept.audio` computes the 128-bin log-mel spectrogram
  targets on the same frame grid and aligns the two.
- :mod:`neuroincept.autodiff` is a self-contained reverse-mode
  differentiation core used by the decoder.
- :mod:`neuroincept.model` is the Inception/GRU/dense decoder.
- :mod:`neuroincept.training` trains it (Adam, early stopping) and fits
  the closed-form ridge baseline.
- :mod:`neuroincept.evaluation` and :mod:`neuroincept.stgi` score
  reconstructions (PCC, STGI) under the fold-resampling protocol.
- :mod:`neuroincept.io` reads/writes WAV audio, feature stores, and
  dataset manifests; :mod:`neuroincept.synthetic` generates a
  fully-specified oracle dataset with a planted EEG-to-spectrogram map.

The ``neuroincept`` console script (see :mod:`neuroincept.cli`) chains
these stages end to end.
"""

from . import framing
from .audio import AudioSignal, LogMelSpectrogram, align, logmel, mel_filterbank
from .autodiff import GradVar, grad_check
from .dsp import (CONTEXT_ORDER, CONTEXT_STEP, DspConfig, EegRecording,
                  FeatureMatrix, extract_hg_features, stack_context,
                  zscore_apply, zscore_fit, zscore_inverse)
from .evaluation import (EvalReport, MetricError, evaluate_protocol, pcc,
                         pcc_spectrogram, report_to_csv)
from .io import (DatasetError, DatasetManifest, ManifestError,
                 ParticipantEntry, StoreFormatError, WavFormatError,
                 load_manifest, read_store, read_wav, save_manifest,
                 write_store, write_wav)
from .model import (InceptionConfig, ModelConfig, NeuroInceptDecoder,
                    load_checkpoint, save_checkpoint)
from .rng import SplitMix64
from .stgi import StgiConfig, build_filterbank, stgi
from .synthetic import SyntheticSpec, generate_synthetic
from .training import (EarlyStopper, TrainConfig, TrainingError, TrainReport,
                       mse, ridge_baseline, ridge_predict, split_80_20,
                       split_indices, split_random, train)

__version__ = "0.1.0"

__all__ = [
    "AudioSignal", "CONTEXT_ORDER", "CONTEXT_STEP", "DatasetError",
    "DatasetManifest", "DspConfig", "EarlyStopper", "EegRecording",
    "EvalReport", "FeatureMatrix", "GradVar", "InceptionConfig",
    "LogMelSpectrogram", "ManifestError", "MetricError", "ModelConfig",
    "NeuroInceptDecoder", "ParticipantEntry", "SplitMix64", "StgiConfig",
    "StoreFormatError", "SyntheticSpec", "TrainConfig", "TrainingError",
    "TrainReport", "WavFormatError", "align", "build_filterbank",
    "evaluate_protocol", "extract_hg_features", "framing",
    "generate_synthetic", "grad_check", "load_checkpoint", "load_manifest",
    "logmel", "mel_filterbank", "mse", "pcc", "pcc_spectrogram",
    "read_store", "read_wav", "report_to_csv", "ridge_baseline",
    "ridge_predict", "save_checkpoint", "save_manifest", "split_80_20",
    "split_indices", "split_random", "stack_context", "stgi", "train",
    "write_store", "write_wav", "zscore_apply", "zscore_fit",
    "zscore_inverse",
]
