"""Audio branch: speech waveform to 128-bin log-mel spectrogram targets.

Frames are the same 0.05 s / 0.01 s grid as the neural branch (shared
arithmetic in :mod:`neuroincept.framing`), Hann-windowed, zero-padded to
a 1024-point FFT; magnitude-squared spectra go through an HTK-style
triangular mel filterbank spanning 0 Hz to Nyquist and are scaled as
``10*log10(max(energy, 1e-10))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import framing

N_MELS = 128
N_FFT = 1024
FLOOR_EPS = 1e-10


@dataclass
class AudioSignal:
    """Mono speech samples in [-1, 1]."""

    fs: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError(f"mono audio required, got shape {self.samples.shape}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs


@dataclass
class LogMelSpectrogram:
    """T x 128 log-energies on the shared frame grid."""

    values: np.ndarray
    frame_times: np.ndarray
    mel_low: float = 0.0
    mel_high: float = 8000.0
    floor_eps: float = FLOOR_EPS
    bin_centers_hz: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be T x bins, got {self.values.shape}")
        if self.frame_times.shape != (self.values.shape[0],):
            raise ValueError("one frame time per row required")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   fs: float = 16000.0):
    """Triangular mel filters as a ``n_mels x (n_fft/2 + 1)`` matrix.

    Returns ``(weights, centers_hz)``.  Edges run from 0 Hz to fs/2 on
    the mel scale; adjacent triangles meet at each other's feet.  Raises
    if the FFT resolution leaves any filter without support.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ValueError("n_fft must be a power of two")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(fs / 2.0),
                                     n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * fs / n_fft
    weights = np.zeros((n_mels, bin_hz.size), dtype=np.float64)
    for m in range(n_mels):
        left, center, right = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_hz - left) / (center - left)
        down = (right - bin_hz) / (right - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    if np.any(weights.sum(axis=1) == 0.0):
        raise ValueError(
            f"{n_mels} mel filters exceed the resolution of a {n_fft}-point FFT")
    return weights, edges_hz[1:-1]


def mel_energies(audio: AudioSignal, n_mels: int = N_MELS, n_fft: int = N_FFT,
                 window: float = framing.WINDOW_S, hop: float = framing.HOP_S):
    """Linear per-frame mel energies (T x n_mels) plus filter centers."""
    x = audio.samples
    n = framing.num_frames(x.size, audio.fs, window, hop)
    win_len = framing.round_half_up(window * audio.fs)
    if win_len > n_fft:
        raise ValueError(f"window of {win_len} samples exceeds n_fft={n_fft}")
    hann = np.hanning(win_len)
    weights, centers = mel_filterbank(n_mels, n_fft, audio.fs)
    frames = np.zeros((n, n_fft), dtype=np.float64)
    for i in range(n):
        a, b = framing.frame_bounds(i, audio.fs, window, hop)
        frames[i, :win_len] = x[a:b] * hann
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    return power @ weights.T, centers


def logmel(audio: AudioSignal, n_mels: int = N_MELS, n_fft: int = N_FFT,
           floor_eps: float = FLOOR_EPS) -> LogMelSpectrogram:
    """Log-mel spectrogram on the shared frame grid (dB-style 10*log10)."""
    energies, centers = mel_energies(audio, n_mels, n_fft)
    values = 10.0 * np.log10(np.maximum(energies, floor_eps))
    return LogMelSpectrogram(values, framing.frame_times(values.shape[0]),
                             mel_low=0.0, mel_high=audio.fs / 2.0,
                             floor_eps=floor_eps, bin_centers_hz=centers)


def align(features, mel: LogMelSpectrogram, order: int = 4, step: int = 5):
    """Pair context-stacked neural rows with their centre-frame mel rows.

    Both streams are first truncated to a common unstacked frame count,
    then the first and last ``order*step`` mel rows are dropped so row t
    of the features (whose context window is centred on unstacked frame
    ``t + order*step``) lines up with row t of the targets.

    Returns ``(X, Y)`` numpy views of equal row count.
    """
    x = features.values if hasattr(features, "values") else np.asarray(features)
    y = mel.values if hasattr(mel, "values") else np.asarray(mel)
    if x.shape[0] == y.shape[0]:  # already paired row-for-row
        return x, y
    margin = order * step
    t_common = min(x.shape[0] + 2 * margin, y.shape[0])
    n = t_common - 2 * margin
    if n <= 0:
        raise ValueError("no aligned rows left after trimming context margins")
    return x[:n], y[margin:margin + n]
