"""Synthetic dataset generator: the desk-scale stand-in for clinical data.

Each channel gets a smooth positive latent envelope (a seeded sum of
sub-8 Hz sinusoids riding on a constant offset).  The synthetic sEEG is
that envelope modulating a carrier inside the high-gamma band plus white
noise, so the real front end can recover the latent trajectory.  The
regression target is a planted linear readout of the context-stacked
latent frames plus observation noise, which gives every end-to-end test
a known answer: at zero noise a linear model must reconstruct the
targets almost perfectly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import framing
from .audio import LogMelSpectrogram
from .dsp import (CONTEXT_ORDER, CONTEXT_STEP, EegRecording, FeatureMatrix,
                  frame_mean, stack_context)
from .rng import SplitMix64

N_LATENT_TONES = 6
LATENT_MAX_HZ = 8.0
LATENT_MIN_HZ = 0.2


@dataclass
class SyntheticSpec:
    n_channels: int = 4
    duration_s: float = 60.0
    seed: int = 7
    planted_map: np.ndarray | None = None  # (9C x n_bins); seeded random if None
    noise_sigma: float = 0.0
    carrier_low: float = 70.0
    carrier_high: float = 170.0
    eeg_fs: float = 1024.0
    n_bins: int = 128

    def __post_init__(self):
        if self.n_channels < 1 or self.duration_s <= 0 or self.noise_sigma < 0:
            raise ValueError("degenerate synthetic spec")
        if not 0 < self.carrier_low < self.carrier_high < self.eeg_fs / 2:
            raise ValueError("carrier band outside (0, Nyquist)")
        if self.planted_map is not None:
            self.planted_map = np.asarray(self.planted_map, dtype=np.float64)
            d = (2 * CONTEXT_ORDER + 1) * self.n_channels
            if self.planted_map.shape != (d, self.n_bins):
                raise ValueError(
                    f"planted_map must be {d} x {self.n_bins}, "
                    f"got {self.planted_map.shape}")


@dataclass
class SyntheticDataset:
    recording: EegRecording
    targets: LogMelSpectrogram
    latent_features: FeatureMatrix
    planted_map: np.ndarray
    latent_frames: np.ndarray = field(repr=False, default=None)


def default_planted_map(spec: SyntheticSpec) -> np.ndarray:
    """Seeded dense readout, scaled so target variance stays O(1)."""
    d = (2 * CONTEXT_ORDER + 1) * spec.n_channels
    rng = SplitMix64((spec.seed << 8) ^ 0x9D)
    return rng.gauss_array(d * spec.n_bins).reshape(d, spec.n_bins) / np.sqrt(d)


def _latent_envelopes(spec: SyntheticSpec, rng: SplitMix64, t: np.ndarray) -> np.ndarray:
    """C x N smooth positive envelopes with 0-8 Hz content."""
    latents = np.empty((spec.n_channels, t.size), dtype=np.float64)
    for c in range(spec.n_channels):
        freqs = rng.uniform(LATENT_MIN_HZ, LATENT_MAX_HZ, N_LATENT_TONES)
        phases = rng.uniform(0.0, 2.0 * np.pi, N_LATENT_TONES)
        amps = rng.uniform(0.3, 1.0, N_LATENT_TONES)
        amps *= 0.9 / amps.sum()  # keeps the envelope >= 0.1
        x = np.ones_like(t)
        for f, p, a in zip(freqs, phases, amps):
            x += a * np.sin(2.0 * np.pi * f * t + p)
        latents[c] = x
    return latents


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic synthetic recording, targets and latent ground truth.

    Returns the raw C x N recording, the (T - 2*order*step) x n_bins target
    matrix, and the context-stacked latent frames the targets were built
    from.  Everything is a pure function of the spec.
    """
    rng = SplitMix64(spec.seed)
    n = int(round(spec.duration_s * spec.eeg_fs))
    t = np.arange(n, dtype=np.float64) / spec.eeg_fs
    latents = _latent_envelopes(spec, rng, t)

    margin = 0.1 * (spec.carrier_high - spec.carrier_low)
    carriers = np.linspace(spec.carrier_low + margin, spec.carrier_high - margin,
                           spec.n_channels)
    samples = np.empty_like(latents)
    for c in range(spec.n_channels):
        phase = rng.uniform(0.0, 2.0 * np.pi, 1)[0]
        samples[c] = latents[c] * np.sin(2.0 * np.pi * carriers[c] * t + phase)
        if spec.noise_sigma > 0:
            samples[c] += spec.noise_sigma * rng.gauss_array(n)
    recording = EegRecording(fs=spec.eeg_fs, samples=samples)

    n_frames = framing.num_frames(n, spec.eeg_fs)
    latent_frames = np.stack(
        [frame_mean(latents[c], spec.eeg_fs) for c in range(spec.n_channels)],
        axis=1)
    assert latent_frames.shape[0] == n_frames

    stacked = stack_context(latent_frames, CONTEXT_ORDER, CONTEXT_STEP)
    planted = spec.planted_map if spec.planted_map is not None else default_planted_map(spec)
    targets = stacked @ planted
    if spec.noise_sigma > 0:
        targets = targets + spec.noise_sigma * rng.gauss_array(
            targets.size).reshape(targets.shape)

    offset = CONTEXT_ORDER * CONTEXT_STEP
    times = framing.frame_times(n_frames)[offset:offset + stacked.shape[0]]
    return SyntheticDataset(
        recording=recording,
        targets=LogMelSpectrogram(targets, times, mel_low=0.0,
                                  mel_high=spec.eeg_fs / 2.0),
        latent_features=FeatureMatrix(stacked, times, context_order=CONTEXT_ORDER,
                                      context_step=CONTEXT_STEP),
        planted_map=planted,
        latent_frames=latent_frames,
    )
