"""Front-ends producing the spectro-temporal map fed to the residual encoder.

Two routes end in the same ``(B, 1, F, T)`` map:

* sinc: learnable band-pass filterbank over the raw segment, absolute value,
  channel axis added, then post-processing;
* SSL: frame-level features (loaded from ``.spnf`` files or computed by a
  small trainable stand-in encoder), a linear projection to 128 dims,
  transpose to (F, T), channel axis added, then post-processing.

The residual encoder then lifts the map to ``S`` of shape (C, F, T).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE
from .errors import DataError, ParseError, ShapeError
from .numerics import (BatchNorm, Conv1d, Conv2d, Linear, Module, Tensor, conv1d,
                       maxpool2d, parameter, selu, where)

SEGMENT_LENGTH = 64600
SSL_DIM = 1024
PROJ_DIM = 128

# pass bands stay this far from DC and Nyquist
SINC_GUARD_HZ = 50.0
SINC_MIN_BAND_HZ = 50.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


# -- sinc filterbank ---------------------------------------------------------

class SincFilterbank(Module):
    """Band-pass kernels parameterised by (low cutoff, bandwidth) in Hz."""

    def __init__(self, low_hz, band_hz, kernel_size=129, sample_rate=SAMPLE_RATE):
        if kernel_size % 2 == 0:
            raise ValueError("sinc kernel size must be odd")
        self.low_hz = parameter(low_hz)
        self.band_hz = parameter(band_hz)
        self.kernel_size = kernel_size
        self.sample_rate = sample_rate
        half = (kernel_size - 1) // 2
        self._n = np.arange(-half, half + 1, dtype=np.float64)
        self._window = np.hamming(kernel_size)
        # Hamming side lobes of the two spectral images leak ~1 % into DC for
        # narrow low bands, so both are projected out with window-shaped terms
        alt = (-1.0) ** self._n
        w0, w1 = self._window.sum(), (alt * self._window).sum()
        self._null = (alt, np.linalg.inv(np.array([[w0, w1], [w1, w0]])))

    @property
    def n_filters(self):
        return self.low_hz.size

    def cutoffs(self):
        """Clamped (low, high) edges in Hz, each shaped (n_filters,)."""
        nyq = self.sample_rate / 2
        low = (self.low_hz.abs() + SINC_GUARD_HZ).clip(
            None, nyq - SINC_GUARD_HZ - SINC_MIN_BAND_HZ)
        high = (low + SINC_MIN_BAND_HZ + self.band_hz.abs()).clip(None, nyq - SINC_GUARD_HZ)
        return low, high

    def kernels(self):
        """Windowed band-pass impulse responses, shape (n_filters, 1, K),
        with unit pass-band gain and exactly zero response at DC and Nyquist."""
        low, high = self.cutoffs()
        sr = self.sample_rate
        centre = self._n == 0
        n_safe = np.where(centre, 1.0, self._n)
        lo = low.reshape(-1, 1)
        hi = high.reshape(-1, 1)
        arg = 2.0 * np.pi * n_safe / sr
        side = ((hi * arg).sin() - (lo * arg).sin()) * (1.0 / (np.pi * n_safe))
        width = (hi - lo) * (2.0 / sr)
        h = where(centre[None, :], width, side)
        h = h * self._window
        alt, inv = self._null
        dc = h.sum(axis=1, keepdims=True)
        ny = (h * alt).sum(axis=1, keepdims=True)
        a = dc * inv[0, 0] + ny * inv[0, 1]
        b = dc * inv[1, 0] + ny * inv[1, 1]
        h = h - a * self._window - b * (alt * self._window)
        return h.reshape(self.n_filters, 1, self.kernel_size)

    def forward(self, x):
        """``x``: (B, L) samples -> (B, n_filters, L - K + 1)."""
        return conv1d(x.unsqueeze(1), self.kernels())


def mel_init_filterbank(n_filters=70, kernel_size=129, sample_rate=SAMPLE_RATE):
    """Filters whose edges are evenly spaced on the mel scale over the usable band."""
    nyq = sample_rate / 2
    mel = np.linspace(hz_to_mel(SINC_GUARD_HZ), hz_to_mel(nyq - SINC_GUARD_HZ), n_filters + 1)
    edges = mel_to_hz(mel)
    low = edges[:-1] - SINC_GUARD_HZ
    # cutoffs() adds the minimum width back, so bands stay contiguous
    # wherever the mel spacing exceeds it
    band = np.maximum(np.diff(edges) - SINC_MIN_BAND_HZ, 0.0)
    return SincFilterbank(low, band, kernel_size, sample_rate)


# -- post-processing and SSL route ----------------------------------------------

class PostProcessing(Module):
    """Max-pool, batch norm and SeLU over a (B, 1, F, T) map."""

    def __init__(self, pool=3):
        self.pool = pool
        self.bn = BatchNorm(1)

    def forward(self, x):
        return selu(self.bn(maxpool2d(x, self.pool)))


class SincFrontEnd(Module):
    def __init__(self, rng, n_filters=70, kernel_size=129, pool=3,
                 segment_length=SEGMENT_LENGTH):
        self.filterbank = mel_init_filterbank(n_filters, kernel_size)
        self.post = PostProcessing(pool)
        self.segment_length = segment_length

    def forward(self, x):
        return self.post(sinc_forward(x, self.filterbank, self.segment_length))


def sinc_forward(x, filterbank, segment_length=SEGMENT_LENGTH):
    """Filterbank response magnitudes with a channel axis: (B, 1, n_filters, L')."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 1:
        x = x.unsqueeze(0)
    if x.shape[-1] != segment_length:
        raise ShapeError(
            f"sinc front-end expects segments of exactly {segment_length} samples, "
            f"got {x.shape[-1]}")
    return filterbank(x).abs().unsqueeze(1)


class StubSslEncoder(Module):
    """Trainable stand-in for a pre-trained SSL model.

    A strided conv with a 20 ms hop (320 samples at 16 kHz, 25 ms window),
    SeLU, then a per-frame linear map to ``dim``: 64 600 samples -> 201 frames.
    """

    def __init__(self, rng, dim=SSL_DIM, hidden=64, window=400, hop=320):
        self.conv = Conv1d(1, hidden, window, rng, stride=hop)
        self.out = Linear(hidden, dim, rng)
        self.dim = dim

    def forward(self, x):
        """``x``: (B, L) -> (B, T_ssl, dim)."""
        h = selu(self.conv(x.unsqueeze(1)))
        return self.out(h.transpose(0, 2, 1))


class ProjectionHead(Module):
    def __init__(self, rng, d_in=SSL_DIM, d_out=PROJ_DIM):
        self.fc = Linear(d_in, d_out, rng)

    def forward(self, feat):
        return self.fc(feat)


def project_and_shape(feat, head):
    """(T, D) or (B, T, D) features -> (B, 1, 128, T): project, transpose, add channel."""
    feat = feat if isinstance(feat, Tensor) else Tensor(feat)
    if feat.ndim == 2:
        feat = feat.unsqueeze(0)
    return head(feat).transpose(0, 2, 1).unsqueeze(1)


class SslFrontEnd(Module):
    """SSL route. With ``encoder=None`` the input is a precomputed feature batch."""

    def __init__(self, rng, encoder=None, dim=SSL_DIM, proj_dim=PROJ_DIM, pool=3):
        self.encoder = encoder
        self.head = ProjectionHead(rng, dim, proj_dim)
        self.post = PostProcessing(pool)

    def forward(self, x):
        feat = self.encoder(x) if self.encoder is not None else x
        return self.post(project_and_shape(feat, self.head))


# -- residual encoder ----------------------------------------------------------------

KERNEL = (2, 3)
SAME_PAD = ((1, 0), (1, 1))  # even kernel height: pad the top row only


class ResBlock(Module):
    """conv(2,3) -> BN -> SeLU -> conv(2,3), plus an identity skip (1x1 conv
    when the channel count changes). Convolutions carry no bias."""

    def __init__(self, c_in, c_out, rng):
        self.conv1 = Conv2d(c_in, c_out, KERNEL, rng, padding=SAME_PAD, bias=False)
        self.bn = BatchNorm(c_out)
        self.conv2 = Conv2d(c_out, c_out, KERNEL, rng, padding=SAME_PAD, bias=False)
        self.skip = Conv2d(c_in, c_out, 1, rng, bias=False) if c_in != c_out else None

    def forward(self, x):
        out = self.conv2(selu(self.bn(self.conv1(x))))
        identity = self.skip(x) if self.skip is not None else x
        return out + identity


class ResidualEncoder(Module):
    def __init__(self, rng, stages=((32, 2), (64, 4)), c_in=1):
        self.blocks = []
        for width, count in stages:
            for _ in range(count):
                self.blocks.append(ResBlock(c_in, width, rng))
                c_in = width
        self.bn = BatchNorm(c_in)
        self.channels = c_in

    def forward(self, x, trace=None):
        for block in self.blocks:
            x = block(x)
            if trace is not None:
                trace.append(x.shape)
        return selu(self.bn(x))


def residual_encoder(x, encoder):
    return encoder(x)


# -- SSL feature files ---------------------------------------------------------------

SPNF_MAGIC = b"SPNF"
SPNF_VERSION = 1


@dataclass
class SslFeatureRecord:
    utterance_id: str
    features: np.ndarray  # (T_ssl, D_ssl) float64

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be (T>=1, D), got {self.features.shape}")


def encode_ssl_features(record):
    arr = np.asarray(record.features, dtype="<f8")
    uid = record.utterance_id.encode("utf-8")
    return b"".join([
        SPNF_MAGIC, struct.pack("<I", SPNF_VERSION),
        struct.pack("<I", len(uid)), uid,
        struct.pack("<I", arr.ndim), struct.pack(f"<{arr.ndim}Q", *arr.shape),
        arr.tobytes(),
    ])


def write_ssl_features(path, record):
    Path(path).write_bytes(encode_ssl_features(record))


def iter_ssl_features(blob):
    """Yield every record in a byte string of concatenated ``.spnf`` records."""
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(
                f"truncated {what}: expected {n} bytes, got {len(blob) - pos}", offset=pos)
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        start = pos
        magic = take(4, "magic")
        if magic != SPNF_MAGIC:
            raise ParseError(f"bad feature-file magic {magic!r}", offset=start)
        (version,) = struct.unpack("<I", take(4, "version"))
        if version != SPNF_VERSION:
            raise ParseError(f"unsupported feature-file version {version}", offset=pos - 4)
        (nlen,) = struct.unpack("<I", take(4, "utterance-id length"))
        try:
            uid = take(nlen, "utterance id").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("utterance id is not UTF-8", offset=pos - nlen) from exc
        (rank,) = struct.unpack("<I", take(4, "rank"))
        if rank != 2:
            raise ParseError(f"feature matrix must have rank 2, got {rank}", offset=pos - 4)
        dims = struct.unpack("<2Q", take(16, "dims"))
        if dims[0] < 1:
            raise ParseError(f"feature matrix has no frames {dims}", offset=pos - 16)
        payload = take(8 * dims[0] * dims[1], "payload")
        yield SslFeatureRecord(uid, np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64))


def load_ssl_features(path, utterance_id):
    """Read ``utterance_id`` from a feature file, or from ``<dir>/<id>.spnf``."""
    path = Path(path)
    if path.is_dir():
        path = path / f"{utterance_id}.spnf"
    if not path.exists():
        raise DataError(f"feature file not found: {path}")
    for record in iter_ssl_features(path.read_bytes()):
        if record.utterance_id == utterance_id:
            return record
    raise DataError(f"{path}: no features for utterance {utterance_id!r}")
