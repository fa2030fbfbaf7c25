"""Shared frame grid: 0.05 s windows, 0.01 s hop, half-up rounding."""

import numpy as np
import pytest

from neuroincept import framing


def test_constants():
    assert framing.WINDOW_S == 0.05
    assert framing.HOP_S == 0.01


@pytest.mark.parametrize("x,expected", [
    (0.4, 0), (0.5, 1), (0.6, 1), (1.5, 2), (2.5, 3), (-0.5, 0), (3.0, 3),
])
def test_round_half_up(x, expected):
    assert framing.round_half_up(x) == expected


@pytest.mark.parametrize("fs,duration_s,expected", [
    # frames = floor((dur - window) / hop) + 1, derived by hand
    (1024.0, 60.0, 5996),
    (16000.0, 60.0, 5996),
    (1024.0, 1.0, 96),
    (16000.0, 0.05, 1),
])
def test_num_frames_formula(fs, duration_s, expected):
    n = int(round(duration_s * fs))
    assert framing.num_frames(n, fs) == expected


def test_num_frames_matches_bounds_oracle():
    """Counted frames must fit inside the signal, and the count must be
    within one frame of the sample-level maximum (rounding slack)."""
    for fs, sizes in ((1024.0, (512, 1000, 4096, 61440)),
                      (16000.0, (800, 12345, 160000, 960000))):
        for n in sizes:
            m = framing.num_frames(n, fs)
            assert m >= 1
            lo, hi = framing.frame_bounds(m - 1, fs)
            assert hi <= n, "counted frame reads past the signal"
            max_fit = 0
            while framing.frame_bounds(max_fit, fs)[1] <= n:
                max_fit += 1
            assert m <= max_fit <= m + 1


def test_frame_bounds_width_and_step():
    fs = 1024.0
    widths = []
    starts = []
    for i in range(50):
        lo, hi = framing.frame_bounds(i, fs)
        widths.append(hi - lo)
        starts.append(lo)
    # window of 0.05 s at 1024 Hz = 51.2 samples -> 51 per half-up rounding
    # of the end offset; width may wobble by one sample with rounding
    assert all(abs(w - 51.2) <= 1 for w in widths)
    # hop of 0.01 s at 1024 Hz = 10.24 samples -> starts advance 10 or 11
    steps = np.diff(starts)
    assert set(steps.tolist()) <= {10, 11}
    assert np.isclose(np.mean(steps), 10.24, atol=0.1)


def test_frame_times_grid():
    t = framing.frame_times(5)
    assert np.allclose(t, [0.0, 0.01, 0.02, 0.03, 0.04])


def test_same_grid_across_rates():
    """EEG (1024 Hz) and audio (16 kHz) frame counts agree whenever the
    duration is an exact sample count at both rates, which is what makes
    feature/target alignment trivial for jointly recorded signals."""
    for dur in (1.0, 2.5, 60.0):
        n_eeg = int(round(dur * 1024.0))
        n_audio = int(round(dur * 16000.0))
        assert n_eeg / 1024.0 == n_audio / 16000.0 == dur
        assert framing.num_frames(n_eeg, 1024.0) == \
            framing.num_frames(n_audio, 16000.0)
