"""Neural-signal front end: raw multichannel sEEG to stacked high-gamma features.

Per channel: remove the linear trend, band-pass to 70-170 Hz, notch out
line noise at 50/100/150 Hz, take the Hilbert envelope, average it over
0.05 s frames hopping by 0.01 s, then concatenate each frame with its
neighbours at offsets of +-5, +-10, +-15, +-20 frames (order 4, step 5)
so every output row carries 9 frames x C channels of context.

All filtering is zero phase (forward-backward second-order sections), so
envelope frames stay aligned with the simultaneously recorded audio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from . import framing

HIGH_GAMMA_BAND = (70.0, 170.0)
LINE_NOISE_HZ = (50.0, 100.0, 150.0)
DEFAULT_BANDPASS_ORDER = 4
DEFAULT_NOTCH_BANDWIDTH = 2.0
CONTEXT_ORDER = 4
CONTEXT_STEP = 5


@dataclass
class EegRecording:
    """Multichannel neural recording: ``samples`` is C x N."""

    fs: float
    samples: np.ndarray
    channel_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError("sampling rate must be positive")
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError(f"samples must be C x N, got {self.samples.shape}")
        if not self.channel_labels:
            self.channel_labels = [f"ch{i:02d}" for i in range(self.samples.shape[0])]
        if len(self.channel_labels) != self.samples.shape[0]:
            raise ValueError("one label per channel required")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class FilterSpec:
    """Bandpass or notch design request."""

    kind: str  # "bandpass" | "notch"
    band_low: float = 0.0
    band_high: float = 0.0
    center: float = 0.0
    order: int = DEFAULT_BANDPASS_ORDER
    bandwidth: float = DEFAULT_NOTCH_BANDWIDTH


@dataclass
class FeatureMatrix:
    """T x D feature rows with their frame timing and stacking metadata."""

    values: np.ndarray
    frame_times: np.ndarray
    hop: float = framing.HOP_S
    window: float = framing.WINDOW_S
    context_order: int = 0
    context_step: int = CONTEXT_STEP

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got {self.values.shape}")
        if self.frame_times.shape != (self.values.shape[0],):
            raise ValueError("one frame time per row required")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class DspConfig:
    band_low: float = HIGH_GAMMA_BAND[0]
    band_high: float = HIGH_GAMMA_BAND[1]
    bandpass_order: int = DEFAULT_BANDPASS_ORDER
    notch_centers: tuple = LINE_NOISE_HZ
    notch_bandwidth: float = DEFAULT_NOTCH_BANDWIDTH
    context_order: int = CONTEXT_ORDER
    context_step: int = CONTEXT_STEP


def detrend(x: np.ndarray) -> np.ndarray:
    """Subtract the least-squares line fit over the whole signal."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("detrend needs a 1-D signal of length >= 2")
    return scipy.signal.detrend(x, type="linear")


def design_butterworth_bandpass(low: float = HIGH_GAMMA_BAND[0],
                                high: float = HIGH_GAMMA_BAND[1],
                                order: int = DEFAULT_BANDPASS_ORDER,
                                fs: float = 1024.0) -> np.ndarray:
    """Butterworth bandpass as second-order sections (analog prototype,
    bilinear transform)."""
    if not 0.0 < low < high < fs / 2.0:
        raise ValueError(f"band {low}-{high} Hz outside (0, {fs / 2}) Hz")
    return scipy.signal.butter(order, [low, high], btype="bandpass",
                               fs=fs, output="sos")


def design_notch(center: float, bandwidth: float = DEFAULT_NOTCH_BANDWIDTH,
                 fs: float = 1024.0) -> np.ndarray:
    """Second-order IIR notch: unit gain away from ``center``, null at it."""
    if not 0.0 < center < fs / 2.0:
        raise ValueError(f"notch center {center} Hz outside (0, {fs / 2}) Hz")
    b, a = scipy.signal.iirnotch(center, center / bandwidth, fs=fs)
    return scipy.signal.tf2sos(b, a)


def sos_response(sos: np.ndarray, freq_hz, fs: float) -> np.ndarray:
    """Complex frequency response of an SOS cascade at the given frequencies."""
    sos = np.atleast_2d(np.asarray(sos, dtype=np.float64))
    w = 2.0 * np.pi * np.atleast_1d(np.asarray(freq_hz, dtype=np.float64)) / fs
    zinv = np.exp(-1j * w)
    h = np.ones_like(zinv)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * zinv + b2 * zinv ** 2) / (a0 + a1 * zinv + a2 * zinv ** 2)
    return h


def filtfilt(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Zero-phase forward-backward filtering with odd reflection padding
    of length 3 * (2 * n_sections)."""
    sos = np.atleast_2d(np.asarray(sos, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    padlen = 3 * (2 * sos.shape[0])
    if x.size <= padlen:
        raise ValueError(
            f"signal of {x.size} samples too short for padding of {padlen}")
    return scipy.signal.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)


def hilbert_envelope(x: np.ndarray) -> np.ndarray:
    """Magnitude of the analytic signal (FFT method: negative frequencies
    zeroed, positive doubled, DC and Nyquist bins kept as-is)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 8:
        raise ValueError("hilbert_envelope needs at least 8 samples")
    return np.abs(scipy.signal.hilbert(x))


def frame_mean(x: np.ndarray, fs: float, window: float = framing.WINDOW_S,
               hop: float = framing.HOP_S) -> np.ndarray:
    """Arithmetic mean of the signal over each frame."""
    x = np.asarray(x, dtype=np.float64)
    n = framing.num_frames(x.size, fs, window, hop)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        a, b = framing.frame_bounds(i, fs, window, hop)
        out[i] = x[a:b].mean()
    return out


def stack_context(frames: np.ndarray, order: int = CONTEXT_ORDER,
                  step: int = CONTEXT_STEP) -> np.ndarray:
    """Concatenate each frame with neighbours at offsets k*step,
    k = -order..order, ascending.  Output has 2*order*step fewer rows
    and (2*order+1) times more columns."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValueError(f"frames must be T x C, got {frames.shape}")
    if order == 0:
        return frames.copy()
    t_in = frames.shape[0]
    margin = order * step
    t_out = t_in - 2 * margin
    if t_out <= 0:
        raise ValueError(
            f"{t_in} frames too few for context order {order}, step {step}")
    cols = [frames[margin + k * step: margin + k * step + t_out]
            for k in range(-order, order + 1)]
    return np.concatenate(cols, axis=1)


def zscore_fit(values: np.ndarray):
    """Per-column mean/std (population, 1/n) plus a zero-variance mask.

    Fit this on training rows only and reuse the statistics elsewhere.
    """
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    degenerate = std == 0.0
    return mean, std, degenerate


def zscore_apply(values: np.ndarray, mean: np.ndarray, std: np.ndarray,
                 degenerate: np.ndarray) -> np.ndarray:
    """Standardize with previously fitted statistics; zero-variance
    columns are forced to all-zeros instead of dividing by zero."""
    values = np.asarray(values, dtype=np.float64)
    safe = np.where(degenerate, 1.0, std)
    out = (values - mean) / safe
    out[:, degenerate] = 0.0
    return out


def zscore_inverse(values: np.ndarray, mean: np.ndarray, std: np.ndarray,
                   degenerate: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    out = values * np.where(degenerate, 1.0, std) + mean
    out[:, degenerate] = np.broadcast_to(mean[degenerate], out[:, degenerate].shape)
    return out


def extract_channel_envelope_frames(x: np.ndarray, fs: float,
                                    cfg: DspConfig) -> np.ndarray:
    """Single-channel chain up to frame means (no context stacking)."""
    y = detrend(x)
    y = filtfilt(design_butterworth_bandpass(cfg.band_low, cfg.band_high,
                                             cfg.bandpass_order, fs), y)
    for center in cfg.notch_centers:
        y = filtfilt(design_notch(center, cfg.notch_bandwidth, fs), y)
    return frame_mean(hilbert_envelope(y), fs)


def extract_hg_features(rec: EegRecording,
                        cfg: DspConfig | None = None) -> FeatureMatrix:
    """Full front end: per-channel envelope frames, stacked with context.

    Returns a (T - 2*order*step) x (2*order+1)*C matrix whose row times
    point at the centre frame of each context window.
    """
    cfg = cfg or DspConfig()
    per_channel = [extract_channel_envelope_frames(rec.samples[c], rec.fs, cfg)
                   for c in range(rec.n_channels)]
    frames = np.stack(per_channel, axis=1)
    stacked = stack_context(frames, cfg.context_order, cfg.context_step)
    margin = cfg.context_order * cfg.context_step
    times = framing.frame_times(frames.shape[0])[margin:margin + stacked.shape[0]]
    return FeatureMatrix(stacked, times, context_order=cfg.context_order,
                         context_step=cfg.context_step)
