"""Compute a 128-bin log-mel spectrogram of a synthetic chirp.

Synthesizes a 16 kHz sweep from 200 Hz to 4 kHz, runs the mel front end,
and prints how the peak mel bin climbs over time together with the grid
geometry (50 ms windows, 10 ms hop).

    python3 demos/demo_logmel.py --duration 2
"""

import argparse

import numpy as np

from neuroincept.audio import AudioSignal, logmel
from neuroincept.framing import HOP_S, WINDOW_S


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration", type=float, default=2.0, help="seconds")
    ap.add_argument("--f0", type=float, default=200.0)
    ap.add_argument("--f1", type=float, default=4000.0)
    args = ap.parse_args()

    fs = 16000.0
    t = np.arange(int(args.duration * fs)) / fs
    # linear sweep: instantaneous frequency f0 + (f1 - f0) * t / T
    phase = 2.0 * np.pi * (args.f0 * t
                           + 0.5 * (args.f1 - args.f0) * t ** 2 / args.duration)
    audio = AudioSignal(fs=fs, samples=0.5 * np.sin(phase))

    mel = logmel(audio)
    print(f"spectrogram: {mel.frames} frames x {mel.bins} bins "
          f"({WINDOW_S * 1e3:.0f} ms window, {HOP_S * 1e3:.0f} ms hop)")
    print(f"value range: [{mel.values.min():.1f}, {mel.values.max():.1f}] dB")

    centers_hz = mel.bin_centers_hz
    print("peak bin trajectory:")
    for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
        i = int(frac * (mel.frames - 1))
        peak = int(np.argmax(mel.values[i]))
        expect = args.f0 + (args.f1 - args.f0) * mel.frame_times[i] / args.duration
        print(f"  t = {mel.frame_times[i]:.2f} s: bin {peak:3d} "
              f"(~{centers_hz[peak]:7.1f} Hz, sweep at {expect:7.1f} Hz)")


if __name__ == "__main__":
    main()
