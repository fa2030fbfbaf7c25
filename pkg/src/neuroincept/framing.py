"""Shared frame-boundary arithmetic.

Both the neural and the audio branch window their signals into 0.05 s
frames with a 0.01 s hop.  Frame counts are computed in continuous time
(with a tiny epsilon against float rounding) and sample indices by
half-up rounding, so a 1024 Hz stream (non-integer 51.2-sample window)
and a 16 kHz stream of equal duration produce identical frame counts.
"""

from __future__ import annotations

import numpy as np

WINDOW_S = 0.05
HOP_S = 0.01

_EPS = 1e-9


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def num_frames(n_samples: int, fs: float, window: float = WINDOW_S,
               hop: float = HOP_S) -> int:
    """floor((duration - window) / hop) + 1, or raise if too short."""
    duration = n_samples / fs
    if duration < window - _EPS:
        raise ValueError(
            f"signal of {duration:.4f}s shorter than one {window}s window")
    return int(np.floor((duration - window) / hop + _EPS)) + 1


def frame_bounds(i: int, fs: float, window: float = WINDOW_S,
                 hop: float = HOP_S) -> tuple[int, int]:
    """Half-open sample range [start, stop) of frame ``i``."""
    start = round_half_up(i * hop * fs)
    return start, start + round_half_up(window * fs)


def frame_times(n: int, hop: float = HOP_S) -> np.ndarray:
    """Start times (seconds) of ``n`` consecutive frames."""
    return np.arange(n, dtype=np.float64) * hop
