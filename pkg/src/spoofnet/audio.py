"""Waveforms and 16-bit PCM mono 16 kHz WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, UnsupportedFormatError

SAMPLE_RATE = 16000


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D sample array")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")

    def __len__(self):
        return self.samples.size


def read_wav(path):
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            comp = fh.getcomptype()
            frames = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: unsupported WAV format ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    problems = []
    if comp != "NONE":
        problems.append(f"compression {comp}")
    if channels != 1:
        problems.append(f"{channels} channels")
    if width != 2:
        problems.append(f"{8 * width}-bit samples")
    if rate != SAMPLE_RATE:
        problems.append(f"{rate} Hz")
    if problems:
        raise UnsupportedFormatError(
            f"{path}: only 16-bit PCM mono {SAMPLE_RATE} Hz is supported, got "
            + ", ".join(problems))
    pcm = np.frombuffer(frames, dtype="<i2")
    if pcm.size == 0:
        raise DataError(f"{path}: no samples")
    return Waveform(pcm.astype(np.float64) / 32768.0)


def write_wav(path, waveform):
    samples = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())
