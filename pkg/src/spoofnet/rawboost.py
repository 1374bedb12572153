"""On-the-fly waveform augmentation with three noise families.

* convolutive: the signal and its integer powers, each passed through a
  random multi-band FIR equaliser, summed and renormalised to the input peak;
* impulsive: signal-dependent clicks at a random subset of sample positions;
* stationary: white noise shaped by a random FIR coloration and added at a
  random SNR.

The ``la`` preset chains convolutive then impulsive noise, the ``df`` preset
adds stationary coloured noise only.  Every parameter range below is an
implementation default and can be overridden from the ``[rawboost]`` section
of a config file.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio import SAMPLE_RATE, Waveform
from .errors import ConfigError

STRATEGIES = ("la", "df", "none", "conv", "impulsive", "stationary")
NYQUIST = SAMPLE_RATE / 2


@dataclass(frozen=True)
class AugmentationConfig:
    strategy: str = "none"
    n_bands: tuple = (0, 5)
    center_hz: tuple = (20.0, 8000.0)
    width_hz: tuple = (100.0, 1000.0)
    band_gain_db: tuple = (-10.0, 40.0)
    nonlinear_band_gain_db: tuple = (-5.0, 20.0)
    harmonic_order: tuple = (1, 5)
    fir_taps: int = 1025
    impulse_density: tuple = (0.0, 0.1)
    # impulses sit this many dB below the sample they perturb
    impulse_gain_db: tuple = (10.0, 40.0)
    snr_db: tuple = (10.0, 40.0)
    coloration_gain_db: tuple = (-10.0, 40.0)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown augmentation strategy {self.strategy!r}; "
                              f"expected one of {', '.join(STRATEGIES)}")
        problems = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = tuple(value)
                object.__setattr__(self, f.name, value)
            if isinstance(value, tuple):
                if len(value) != 2 or value[0] > value[1]:
                    problems.append(f"{f.name} must be a non-empty [lo, hi] range, got {value}")
        lo, hi = self.snr_db
        if lo < 0 or hi > 60:
            problems.append(f"snr_db must lie within [0, 60], got {self.snr_db}")
        lo, hi = self.impulse_density
        if lo < 0 or hi > 0.2:
            problems.append(f"impulse_density must lie within [0, 0.2], got {self.impulse_density}")
        if self.n_bands[0] < 0 or self.harmonic_order[0] < 1:
            problems.append("n_bands must be >= 0 and harmonic_order >= 1")
        if self.fir_taps < 3 or self.fir_taps % 2 == 0:
            problems.append(f"fir_taps must be odd and >= 3, got {self.fir_taps}")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_mapping(cls, mapping, **overrides):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown rawboost keys: {', '.join(sorted(unknown))}")
        merged = {**mapping, **overrides}
        return cls(**merged)


def utterance_rng(seed, utterance_id, epoch=0):
    """Independent stream per (seed, utterance, epoch)."""
    return np.random.default_rng([int(seed), zlib.crc32(utterance_id.encode("utf-8")), int(epoch)])


def _samples(w):
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def multiband_fir(bands, taps=1025, fs=SAMPLE_RATE):
    """Linear-phase FIR with unit gain everywhere except inside ``bands``.

    ``bands`` holds ``(center_hz, width_hz, gain_db)`` triples; a negative gain
    gives a notch. Each band is a Hann-windowed sinc band-pass scaled by
    ``10**(gain/20) - 1`` and added to a centred unit impulse.
    """
    h = np.zeros(taps)
    h[taps // 2] = 1.0
    nyq = fs / 2
    for center, width, gain_db in bands:
        f1 = max(center - width / 2, 1.0)
        f2 = min(center + width / 2, nyq - 1.0)
        if f2 <= f1:
            continue
        bp = signal.firwin(taps, [f1, f2], window="hann", pass_zero=False, fs=fs)
        h += (10.0 ** (gain_db / 20.0) - 1.0) * bp
    return h


def multiband_filter(x, bands, taps=1025):
    x = np.asarray(x, dtype=np.float64)
    if not bands:
        return x.copy()
    return signal.oaconvolve(x, multiband_fir(bands, taps), mode="same")


def draw_bands(rng, cfg, gain_range):
    n = int(rng.integers(cfg.n_bands[0], cfg.n_bands[1] + 1))
    return [(rng.uniform(*cfg.center_hz), rng.uniform(*cfg.width_hz), rng.uniform(*gain_range))
            for _ in range(n)]


def _peak_normalise(y, peak):
    ymax = np.max(np.abs(y))
    return y * (peak / ymax) if ymax > 0 else y


def convolutive_noise(w, cfg, rng):
    x = _samples(w)
    order = int(rng.integers(cfg.harmonic_order[0], cfg.harmonic_order[1] + 1))
    y = np.zeros_like(x)
    for n in range(1, order + 1):
        gains = cfg.band_gain_db if n == 1 else cfg.nonlinear_band_gain_db
        bands = draw_bands(rng, cfg, gains)
        term = x ** n
        if n > 1:
            term = term - term.mean()
        y += multiband_filter(term, bands, cfg.fir_taps)
    return Waveform(_peak_normalise(y, np.max(np.abs(x))))


def impulsive_noise(w, cfg, rng):
    x = _samples(w)
    L = x.size
    density = rng.uniform(*cfg.impulse_density)
    count = int(np.floor(density * L))
    gain = 10.0 ** (-rng.uniform(*cfg.impulse_gain_db) / 20.0)
    pos = rng.choice(L, size=count, replace=False)
    shape = (2 * rng.random(count) - 1) * (2 * rng.random(count) - 1)
    y = x.copy()
    y[pos] += gain * x[pos] * shape
    return Waveform(y)


def stationary_colored_noise(w, cfg, rng):
    x = _samples(w)
    snr = rng.uniform(*cfg.snr_db)
    noise = rng.standard_normal(x.size)
    noise = multiband_filter(noise, draw_bands(rng, cfg, cfg.coloration_gain_db), cfg.fir_taps)
    # silence has no level of its own; reference the SNR to full-scale RMS
    ref = _rms(x) if np.any(x) else 1.0
    noise *= ref / (_rms(noise) * 10.0 ** (snr / 20.0))
    return Waveform(x + noise)


def apply_strategy(w, cfg, rng):
    if cfg.strategy == "none":
        return w if isinstance(w, Waveform) else Waveform(w)
    if cfg.strategy == "la":
        y = impulsive_noise(convolutive_noise(w, cfg, rng), cfg, rng)
    elif cfg.strategy == "df":
        y = stationary_colored_noise(w, cfg, rng)
    elif cfg.strategy == "conv":
        y = convolutive_noise(w, cfg, rng)
    elif cfg.strategy == "impulsive":
        y = impulsive_noise(w, cfg, rng)
    else:
        y = stationary_colored_noise(w, cfg, rng)
    peak = np.max(np.abs(y.samples))
    if peak > 1.0:
        y = Waveform(y.samples / peak)
    return y
