"""Multi-channel acoustic preprocessing: contact-free reference subtraction,
video-frame-aligned windowing, STFT magnitude spectrograms, and the two-step
corpus normalization (per-bin RMS, then per-channel standardization).

Conventions: 5 microphone channels, 44.1 kHz, 30 fps video, 35 ms windows,
1024-point FFT with 512 hop -> 513 one-sided bins and 2 STFT frames per
window.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

N_CHANNELS = 5
SAMPLE_RATE = 44100
FFT_SIZE = 1024
FFT_HOP = 512
N_BINS = FFT_SIZE // 2 + 1


class WavFormatError(ValueError):
    """Unsupported or malformed WAV content; message names the chunk/field."""


@dataclass
class AudioRecording:
    """Synchronized multi-channel capture session."""

    channels: np.ndarray  # (C, S) float32 in [-1, 1]
    sample_rate: int = SAMPLE_RATE
    subject_id: str = ""
    object_id: str = ""

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 2:
            raise ValueError(f"channels must be (C, S), got {self.channels.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


def window_geometry(sample_rate: int = SAMPLE_RATE, fps: int = 30, window_ms: float = 35.0):
    """(hop, width) in samples: hop syncs to video frames, width to 35 ms."""
    hop = round(sample_rate / fps)
    width = int(np.floor(sample_rate * window_ms / 1000.0))
    return hop, width


def segment_windows(rec: AudioRecording, fps: int = 30, window_ms: float = 35.0,
                    offset: int = 0) -> list[np.ndarray]:
    """Split a recording into per-video-frame blocks of shape (C, width).

    Window k covers samples [offset + k*hop, offset + k*hop + width); the
    count is floor((S - offset - width)/hop) + 1. A too-short recording
    yields zero windows and a warning, not an error.
    """
    hop, width = window_geometry(rec.sample_rate, fps, window_ms)
    usable = rec.n_samples - offset
    if usable < width:
        warnings.warn(f"recording shorter than one window ({usable} < {width} samples); no windows")
        return []
    count = (usable - width) // hop + 1
    return [rec.channels[:, offset + k * hop: offset + k * hop + width] for k in range(count)]


def _hann(n: int) -> np.ndarray:
    # Periodic Hann, the standard STFT analysis choice.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(block: np.ndarray, fft_size: int = FFT_SIZE, hop: int = FFT_HOP) -> np.ndarray:
    """One-sided magnitude spectrogram of a sample block.

    Accepts (W,) or (C, W); returns (F, T) or (C, F, T) with
    T = floor((W - fft)/hop) + 1. Blocks shorter than one FFT are an error.
    """
    x = np.asarray(block, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    w = x.shape[1]
    if w < fft_size:
        raise ValueError(f"block of {w} samples is shorter than the {fft_size}-point FFT")
    t = (w - fft_size) // hop + 1
    win = _hann(fft_size)
    frames = np.stack([x[:, k * hop: k * hop + fft_size] * win for k in range(t)], axis=-2)
    mags = np.abs(np.fft.rfft(frames, axis=-1)).swapaxes(-1, -2)  # (C, F, T)
    mags = mags.astype(np.float32)
    return mags[0] if squeeze else mags


@dataclass
class BaselineProfile:
    """Per-channel mean magnitude spectrum of the contact-free reference."""

    spectra: np.ndarray  # (C, F) non-negative

    def __post_init__(self):
        self.spectra = np.asarray(self.spectra, dtype=np.float32)
        if self.spectra.ndim != 2 or (self.spectra < 0).any():
            raise ValueError("baseline must be a non-negative (C, F) array")


def baseline_profile(rec: AudioRecording, reference_ms: float = 5.0,
                     fft_size: int = FFT_SIZE, hop: int = FFT_HOP) -> BaselineProfile:
    """Magnitude-spectral profile of the first `reference_ms` of a recording.

    A reference shorter than one FFT frame is Hann-windowed at its own
    length, zero-padded, and rescaled by the window-sum ratio so tone
    magnitudes stay comparable with full-frame analysis.
    """
    n = int(np.floor(rec.sample_rate * reference_ms / 1000.0))
    n = min(max(n, 2), rec.n_samples)
    seg = rec.channels[:, :n].astype(np.float64)
    if n >= fft_size:
        t = (n - fft_size) // hop + 1
        win = _hann(fft_size)
        frames = np.stack([seg[:, k * hop: k * hop + fft_size] * win for k in range(t)], axis=1)
        spec = np.abs(np.fft.rfft(frames, axis=-1)).mean(axis=1)
    else:
        win = _hann(n)
        padded = np.zeros((seg.shape[0], fft_size))
        padded[:, :n] = seg * win
        scale = _hann(fft_size).sum() / max(win.sum(), 1e-12)
        spec = np.abs(np.fft.rfft(padded, axis=-1)) * scale
    return BaselineProfile(spec.astype(np.float32))


def subtract_baseline(spec: np.ndarray, base: BaselineProfile) -> np.ndarray:
    """Per-bin magnitude subtraction, clamped at zero. spec: (C, F, T)."""
    spec = np.asarray(spec)
    if spec.ndim != 3 or spec.shape[:2] != base.spectra.shape:
        raise ValueError(f"spectrogram {spec.shape} does not match baseline {base.spectra.shape}")
    return np.maximum(spec - base.spectra[:, :, None], 0.0).astype(np.float32)


@dataclass
class NormalizationStats:
    """Frozen corpus statistics for the two-step normalization."""

    bin_rms: np.ndarray  # (C, F)
    channel_mean: np.ndarray  # (C,)
    channel_std: np.ndarray  # (C,)

    def to_dict(self) -> dict:
        return {
            "bin_rms": self.bin_rms.tolist(),
            "channel_mean": self.channel_mean.tolist(),
            "channel_std": self.channel_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            bin_rms=np.asarray(d["bin_rms"], dtype=np.float32),
            channel_mean=np.asarray(d["channel_mean"], dtype=np.float32),
            channel_std=np.asarray(d["channel_std"], dtype=np.float32),
        )


def fit_normalization(stacks: np.ndarray, eps: float = 1e-8) -> NormalizationStats:
    """Fit per-bin RMS then per-channel mean/std over a corpus (K, C, F, T).

    Degenerate (zero-RMS bins, zero-variance channels) statistics are
    epsilon-floored with a logged warning.
    """
    stacks = np.asarray(stacks, dtype=np.float64)
    if stacks.ndim != 4 or stacks.shape[0] == 0:
        raise ValueError(f"need a non-empty corpus of (C, F, T) stacks, got {stacks.shape}")
    rms = np.sqrt(np.mean(stacks ** 2, axis=(0, 3)))
    if (rms < eps).any():
        logger.warning("normalization: %d silent frequency bins floored at %.0e", int((rms < eps).sum()), eps)
    rms = np.maximum(rms, eps)
    step1 = stacks / rms[None, :, :, None]
    mean = step1.mean(axis=(0, 2, 3))
    std = step1.std(axis=(0, 2, 3))
    if (std < eps).any():
        logger.warning("normalization: zero-variance channels floored at %.0e", eps)
    std = np.maximum(std, eps)
    return NormalizationStats(rms.astype(np.float32), mean.astype(np.float32), std.astype(np.float32))


def apply_normalization(stack: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Apply frozen statistics to one (C, F, T) stack (or a (K, C, F, T) batch)."""
    x = np.asarray(stack, dtype=np.float32)
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    y = x / stats.bin_rms[None, :, :, None]
    y = (y - stats.channel_mean[None, :, None, None]) / stats.channel_std[None, :, None, None]
    y = y.astype(np.float32)
    return y if batched else y[0]


def normalize_corpus(stacks: np.ndarray, eps: float = 1e-8):
    """Fit + apply in one pass; returns (normalized batch, stats)."""
    stats = fit_normalization(stacks, eps=eps)
    return apply_normalization(np.asarray(stacks, dtype=np.float32), stats), stats


# ---------------------------------------------------------------------------
# WAV I/O (RIFF/WAVE; PCM-16 and IEEE float32 only, no resampling)

def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file -> (channels (C, S) float32, sample rate).

    PCM-16 samples scale by 1/32768; float32 passes through bit-exactly.
    Anything else (other codecs, bit depths) is a WavFormatError naming the
    offending chunk field.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file (RIFF header)")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        size = struct.unpack_from("<I", blob, pos + 4)[0]
        body = blob[pos + 8: pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if data is None:
        raise WavFormatError("missing data chunk")
    audio_format, n_channels, rate, _, _, bits = fmt
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float32) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise WavFormatError(f"unsupported codec in fmt chunk (format tag {audio_format}, {bits}-bit)")
    if n_channels < 1:
        raise WavFormatError("fmt chunk declares zero channels")
    samples = samples[: (len(samples) // n_channels) * n_channels]
    return samples.reshape(-1, n_channels).T.copy(), rate


def write_wav(path, channels: np.ndarray, sample_rate: int = SAMPLE_RATE, pcm16: bool = False):
    """Write (C, S) channels as interleaved WAV (float32 by default)."""
    x = np.asarray(channels, dtype=np.float32)
    if x.ndim == 1:
        x = x[None]
    inter = np.ascontiguousarray(x.T)
    if pcm16:
        payload = np.clip(inter * 32768.0, -32768, 32767).astype("<i2").tobytes()
        audio_format, bits = 1, 16
    else:
        payload = inter.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    c = x.shape[0]
    block = c * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, audio_format, c, sample_rate,
                                    sample_rate * block, block, bits)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def load_recording(wav_paths, expected_rate: int = SAMPLE_RATE,
                   subject_id: str = "", object_id: str = "") -> AudioRecording:
    """Assemble a 5-channel recording from one interleaved file or a list of
    per-channel mono files (ordered `_ch0.._ch4` by the caller/manifest)."""
    if isinstance(wav_paths, (str, bytes)) or hasattr(wav_paths, "__fspath__"):
        wav_paths = [wav_paths]
    parts = []
    rate = None
    for p in wav_paths:
        ch, r = read_wav(p)
        if r != expected_rate:
            raise WavFormatError(f"unsupported sample rate {r} in fmt chunk of {p} (expected {expected_rate}; no silent resampling)")
        rate = r
        parts.append(ch)
    length = min(p.shape[1] for p in parts)
    channels = np.concatenate([p[:, :length] for p in parts], axis=0)
    if channels.shape[0] != N_CHANNELS:
        raise WavFormatError(f"expected {N_CHANNELS} channels total, got {channels.shape[0]}")
    return AudioRecording(channels, rate, subject_id, object_id)


def preprocess_recording(rec: AudioRecording, fps: int = 30, window_ms: float = 35.0,
                         reference_ms: float = 5.0, fft_size: int = FFT_SIZE,
                         hop: int = FFT_HOP, log1p: bool = False,
                         offset: int = 0) -> tuple[np.ndarray, BaselineProfile]:
    """Reference subtraction + windowing + STFT for one recording.

    Returns (stacks (K, C, F, T), baseline). Corpus normalization is a
    separate fitting step (`fit_normalization` / `apply_normalization`).
    """
    base = baseline_profile(rec, reference_ms=reference_ms, fft_size=fft_size, hop=hop)
    blocks = segment_windows(rec, fps=fps, window_ms=window_ms, offset=offset)
    stacks = []
    for block in blocks:
        spec = stft_magnitude(block, fft_size=fft_size, hop=hop)
        spec = subtract_baseline(spec, base)
        if log1p:
            spec = np.log1p(spec)
        stacks.append(spec)
    if not stacks:
        return np.zeros((0, rec.channels.shape[0], fft_size // 2 + 1, 0), dtype=np.float32), base
    return np.stack(stacks), base
