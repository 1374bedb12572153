"""Protocols, segment preparation and the synthetic toy corpus."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from ..audio import SAMPLE_RATE, Waveform, read_wav, write_wav
from ..errors import DataError, ParseError
from ..frontend import SEGMENT_LENGTH, load_ssl_features
from ..metrics import write_key

LABELS = ("bonafide", "spoof")


@dataclass(frozen=True)
class ProtocolEntry:
    speaker_id: str
    utterance_id: str
    attack_id: str
    label: str
    condition: str = "-"

    @property
    def is_bona(self):
        return self.label == "bonafide"

    def line(self):
        return f"{self.speaker_id} {self.utterance_id} {self.condition} {self.attack_id} {self.label}"


def parse_protocol(path):
    """Five whitespace-separated fields per line: speaker, utterance,
    condition (or "-"), attack (or "-"), label."""
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise ParseError(f"{path}: expected 5 fields, got {len(fields)}", line=lineno)
        speaker, utt, cond, attack, label = fields
        if label not in LABELS:
            raise ParseError(f"{path}: unknown label {label!r}", line=lineno)
        if (label == "bonafide") != (attack == "-"):
            raise ParseError(f"{path}: attack {attack!r} inconsistent with label {label!r}",
                             line=lineno)
        entries.append(ProtocolEntry(speaker, utt, attack, label, cond))
    return entries


def write_protocol(path, entries):
    Path(path).write_text("".join(e.line() + "\n" for e in entries), encoding="utf-8")


def prepare_segment(x, length=SEGMENT_LENGTH, rng=None):
    """Crop (random offset when ``rng`` is given, else from 0) or tile to ``length``."""
    x = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise DataError("cannot build a segment from an empty waveform")
    if x.size >= length:
        start = int(rng.integers(0, x.size - length + 1)) if rng is not None else 0
        return x[start:start + length].copy()
    return np.tile(x, -(-length // x.size))[:length]


class AudioStore:
    """Waveforms (or SSL feature matrices) by utterance id, read once and cached."""

    def __init__(self, directory, features=False):
        self.directory = Path(directory)
        self.features = features
        self._cache = {}
        if not self.directory.is_dir():
            raise DataError(f"data directory not found: {self.directory}")

    def get(self, utterance_id):
        if utterance_id not in self._cache:
            if self.features:
                value = load_ssl_features(self.directory, utterance_id).features
            else:
                path = self.directory / f"{utterance_id}.wav"
                if not path.exists():
                    raise DataError(f"audio file not found: {path}")
                value = read_wav(path).samples
            self._cache[utterance_id] = value
        return self._cache[utterance_id]


# -- toy corpus ------------------------------------------------------------------

def _envelope(n, rng):
    attack = int(rng.integers(200, 1600))
    release = int(rng.integers(400, 3200))
    env = np.ones(n)
    env[:attack] = np.linspace(0, 1, attack)
    env[-release:] = np.minimum(env[-release:], np.linspace(1, 0, release))
    return env


def _harmonic_bank(n, rng, modulator=None):
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(110.0, 320.0)
    y = np.zeros(n)
    for k in range(1, int(3600 // f0) + 1):
        carrier = np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
        y += carrier * (modulator(rng) if modulator is not None else 1.0)
    return y


def toy_utterance(rng, spoof, n=None):
    """Harmonic tone (bona fide) or the same tone with noise-modulated partials (spoof)."""
    n = int(rng.integers(12000, 80000)) if n is None else n
    if spoof:
        cutoff = rng.uniform(400.0, 1200.0)
        b, a = signal.butter(2, cutoff, fs=SAMPLE_RATE)

        def modulator(r):
            noise = signal.lfilter(b, a, r.standard_normal(n))
            return 1.0 + 2.5 * noise / (np.std(noise) + 1e-12)

        y = _harmonic_bank(n, rng, modulator)
    else:
        y = _harmonic_bank(n, rng)
    y *= _envelope(n, rng)
    return 0.6 * y / np.max(np.abs(y))


def held_out_noise(x, rng, snr_db=(-5.0, 5.0)):
    """Additive first-order low-pass ("brown-ish") noise. Both its coloration
    (outside the FIR band family) and its SNR range (below the augmentation
    floor) are unseen during training."""
    noise = signal.lfilter([1.0], [1.0, -rng.uniform(0.9, 0.98)], rng.standard_normal(x.size))
    snr = rng.uniform(*snr_db)
    noise *= np.sqrt(np.mean(x ** 2)) / (np.sqrt(np.mean(noise ** 2)) * 10 ** (snr / 20))
    y = x + noise
    return y / max(1.0, np.max(np.abs(y)))


def generate_toy_dataset(root, seed=0, n_train=200, n_eval=100):
    """Write the toy corpus under ``root``; returns the created paths.

    Layout: ``train/``, ``eval/`` and ``eval_noisy/`` WAV directories,
    ``protocols/{train,eval}.txt`` and ``keys/eval.tsv``. The noisy variant
    holds the eval utterances corrupted with held-out coloured noise.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    paths = {}
    for part, count in (("train", n_train), ("eval", n_eval)):
        (root / part).mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(count):
            spoof = i % 2 == 1
            uid = f"TOY_{part[0].upper()}_{i:04d}"
            attack = f"A0{1 + (i // 2) % 2}" if spoof else "-"
            entries.append(ProtocolEntry(f"SPK{i % 10:02d}", uid, attack,
                                         "spoof" if spoof else "bonafide"))
            write_wav(root / part / f"{uid}.wav", Waveform(toy_utterance(rng, spoof)))
        (root / "protocols").mkdir(exist_ok=True)
        write_protocol(root / "protocols" / f"{part}.txt", entries)
        paths[part] = entries
    (root / "eval_noisy").mkdir(exist_ok=True)
    for e in paths["eval"]:
        x = read_wav(root / "eval" / f"{e.utterance_id}.wav").samples
        write_wav(root / "eval_noisy" / f"{e.utterance_id}.wav", Waveform(held_out_noise(x, rng)))
    (root / "keys").mkdir(exist_ok=True)
    ev = paths["eval"]
    write_key(root / "keys" / "eval.tsv", [e.utterance_id for e in ev], [e.label for e in ev],
              [e.attack_id for e in ev])
    return {"root": root, "train_protocol": root / "protocols" / "train.txt",
            "eval_protocol": root / "protocols" / "eval.txt", "train_audio": root / "train",
            "eval_audio": root / "eval", "eval_noisy_audio": root / "eval_noisy",
            "eval_key": root / "keys" / "eval.tsv"}
