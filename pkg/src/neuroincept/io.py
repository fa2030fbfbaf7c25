"""Persistence: WAV ingestion, the feature-store container, dataset manifests.

The feature store is a little-endian binary container for one dense
array:

    magic   4 bytes  "NIFS"
    version u32      currently 1
    dtype   u8       1 = float32 LE, 2 = float64 LE
    ndim    u32
    dims    u64 * ndim
    payload row-major, elem_size * prod(dims) bytes

Manifests are UTF-8 ``key = value`` text; see docs/formats.md for the
schema.  WAV support is deliberately narrow: RIFF/WAVE, 16-bit PCM, mono.
"""

from __future__ import annotations

import logging
import os
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioSignal

logger = logging.getLogger(__name__)

STORE_MAGIC = b"NIFS"
STORE_VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR = {np.dtype("float32"): 1, np.dtype("float64"): 2}

EXPECTED_EEG_FS = 1024.0
EXPECTED_AUDIO_FS = 16000.0


class DatasetError(Exception):
    """Base class for persistence failures."""


class WavFormatError(DatasetError):
    pass


class StoreFormatError(DatasetError):
    pass


class ManifestError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(path) -> AudioSignal:
    """Load 16-bit PCM mono audio, normalized by 32768."""
    try:
        with wave.open(str(path), "rb") as w:
            n_channels = w.getnchannels()
            sampwidth = w.getsampwidth()
            fs = w.getframerate()
            n_frames = w.getnframes()
            raw = w.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV ({exc})") from exc
    if n_channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {n_channels} channels")
    if sampwidth != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    if len(raw) != 2 * n_frames:
        raise WavFormatError(f"{path}: truncated data chunk "
                             f"({len(raw)} bytes for {n_frames} frames)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(fs=float(fs), samples=samples)


def write_wav(path, audio: AudioSignal) -> None:
    """Quantize to 16-bit PCM (round-half-even, clipped) and write mono WAV."""
    q = np.clip(np.rint(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(audio.fs))
        w.writeframes(q.tobytes())


# ---------------------------------------------------------------------------
# feature store
# ---------------------------------------------------------------------------


def write_store(path, array, dtype="f8") -> None:
    """Write one dense array.  ``dtype`` is "f8" or "f4"; writing a float64
    array as "f4" is a deliberate, logged precision loss."""
    arr = np.asarray(array)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    target = np.dtype("<" + dtype)
    if target not in _DTYPE_CODES.values():
        raise StoreFormatError(f"unsupported store dtype {dtype!r}")
    if arr.dtype == np.float64 and target == np.dtype("<f4"):
        logger.warning("lossy write: float64 data stored as float32 in %s", path)
    payload = np.ascontiguousarray(arr, dtype=target)
    code = 1 if target == np.dtype("<f4") else 2
    header = STORE_MAGIC + struct.pack("<IBI", STORE_VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def read_store(path) -> np.ndarray:
    """Read a feature store; refuses bad magic, dtype codes, or short payloads."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 13 or blob[:4] != STORE_MAGIC:
        raise StoreFormatError(f"{path}: bad magic, not a feature store")
    version, code, ndim = struct.unpack_from("<IBI", blob, 4)
    if version != STORE_VERSION:
        raise StoreFormatError(f"{path}: unsupported store version {version}")
    if code not in _DTYPE_CODES:
        raise StoreFormatError(f"{path}: unknown dtype code {code}")
    if ndim < 1 or ndim > 32:
        raise StoreFormatError(f"{path}: implausible ndim {ndim}")
    ofs = 13
    if len(blob) < ofs + 8 * ndim:
        raise StoreFormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}Q", blob, ofs)
    ofs += 8 * ndim
    dtype = _DTYPE_CODES[code]
    expected = dtype.itemsize * int(np.prod(dims))
    if len(blob) - ofs != expected:
        raise StoreFormatError(f"{path}: payload of {len(blob) - ofs} bytes, "
                               f"header declares {expected}")
    return np.frombuffer(blob[ofs:], dtype=dtype).reshape(dims).copy()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class ParticipantEntry:
    id: str
    eeg_path: str
    audio_path: str
    eeg_fs: float = EXPECTED_EEG_FS
    audio_fs: float = EXPECTED_AUDIO_FS
    n_channels: int = 0


@dataclass
class DatasetManifest:
    version: str = "1"
    participants: list = field(default_factory=list)

    def get(self, participant_id: str) -> ParticipantEntry:
        for p in self.participants:
            if p.id == participant_id:
                return p
        raise ManifestError(f"participant {participant_id!r} not in manifest")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse a manifest document; ids must be unique and files must exist."""
    base = os.path.dirname(os.path.abspath(str(path)))
    manifest = DatasetManifest()
    current = None

    def _finish(entry):
        if entry is None:
            return
        if not entry.eeg_path or not entry.audio_path:
            raise ManifestError(f"participant {entry.id!r} missing eeg/audio path")
        manifest.participants.append(entry)

    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ManifestError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "version":
                manifest.version = value
            elif key == "participant":
                _finish(current)
                current = ParticipantEntry(id=value, eeg_path="", audio_path="")
            elif current is None:
                raise ManifestError(f"{path}:{lineno}: {key!r} before any participant")
            elif key in ("eeg_path", "audio_path"):
                resolved = value if os.path.isabs(value) else os.path.join(base, value)
                setattr(current, key, resolved)
            elif key in ("eeg_fs", "audio_fs"):
                setattr(current, key, float(value))
            elif key == "n_channels":
                current.n_channels = int(value)
            else:
                raise ManifestError(f"{path}:{lineno}: unknown key {key!r}")
    _finish(current)

    ids = [p.id for p in manifest.participants]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate participant ids")
    for p in manifest.participants:
        if check_files:
            for f_ in (p.eeg_path, p.audio_path):
                if not os.path.exists(f_):
                    raise ManifestError(f"{path}: missing file {f_}")
        if p.eeg_fs != EXPECTED_EEG_FS:
            logger.warning("participant %s: eeg_fs %s (expected %s)",
                           p.id, p.eeg_fs, EXPECTED_EEG_FS)
        if p.audio_fs != EXPECTED_AUDIO_FS and not p.audio_path.endswith(".nifs"):
            # rate expectations only apply to raw audio, not feature stores
            logger.warning("participant %s: audio_fs %s (expected %s)",
                           p.id, p.audio_fs, EXPECTED_AUDIO_FS)
    return manifest


def save_manifest(path, manifest: DatasetManifest) -> None:
    lines = [f"version = {manifest.version}"]
    for p in manifest.participants:
        lines += [
            f"participant = {p.id}",
            f"eeg_path = {p.eeg_path}",
            f"audio_path = {p.audio_path}",
            f"eeg_fs = {p.eeg_fs:g}",
            f"audio_fs = {p.audio_fs:g}",
            f"n_channels = {p.n_channels}",
        ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
