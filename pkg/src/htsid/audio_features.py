"""Audio front end: WAV loading, framing, silence removal, MFCCs and
super-frame assembly.

Two super-feature variants are supported: ``raw_context`` stacks each frame
with its tau-past and tau-future neighbors, ``delta_stack`` appends velocity
and acceleration coefficients computed by the standard regression formula.
Both turn a T x D cepstral matrix into roughly T x 3D.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    EmptyResultError,
    FormatError,
    InsufficientDataError,
)

# Feature-cache file layout: magic, u32 version, u32 T, u32 D, T*D float64
# row-major, all little-endian.
FEATURE_CACHE_MAGIC = b"HTFX"
FEATURE_CACHE_VERSION = 1

MODE_RAW_CONTEXT = "raw_context"
MODE_DELTA_STACK = "delta_stack"

# Names used at the model/registry level for the same two variants.
FEATURE_MODE_X_SUP = "x_sup"
FEATURE_MODE_DELTA_SUP = "delta_mfcc_sup"

MODE_TO_FEATURE_NAME = {
    MODE_RAW_CONTEXT: FEATURE_MODE_X_SUP,
    MODE_DELTA_STACK: FEATURE_MODE_DELTA_SUP,
}
FEATURE_NAME_TO_MODE = {v: k for k, v in MODE_TO_FEATURE_NAME.items()}

_WAVE_FORMAT_NAMES = {
    0x0002: "ADPCM",
    0x0006: "ALAW",
    0x0007: "MULAW",
    0x0011: "IMA_ADPCM",
    0x0055: "MPEG_LAYER3",
}


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM audio normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")


@dataclass(frozen=True)
class FramingConfig:
    frame_ms: float = 25.0
    step_ms: float = 10.0
    window: str = "hanning"
    preemphasis: float = 0.97

    def __post_init__(self):
        if not 0 < self.step_ms <= self.frame_ms:
            raise ConfigError(
                f"need 0 < step_ms <= frame_ms, got {self.step_ms}/{self.frame_ms}"
            )
        if self.window not in ("hanning", "none"):
            raise ConfigError(f"unknown window {self.window!r}")
        if not 0 <= self.preemphasis < 1:
            raise ConfigError(f"preemphasis must be in [0, 1), got {self.preemphasis}")


@dataclass(frozen=True)
class SuperFrameConfig:
    tau: int = 1
    mode: str = MODE_RAW_CONTEXT

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.mode not in (MODE_RAW_CONTEXT, MODE_DELTA_STACK):
            raise ConfigError(f"unknown super-frame mode {self.mode!r}")


def load_wav(path) -> AudioClip:
    """Load a PCM WAV file as a mono clip with samples in [-1, 1].

    Supports 8/16/24-bit integer and 32/64-bit float encodings; multichannel
    input is averaged down to mono. Compressed codecs raise FormatError
    naming the codec.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body, 0)
            if code == 0xFFFE:  # extensible: real format sits in the GUID
                if len(body) < 26:
                    raise FormatError(f"{path}: truncated extensible fmt chunk")
                (code,) = struct.unpack_from("<H", body, 24)
            fmt = (code, channels, rate, bits)
        elif chunk_id == b"data":
            raw = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or raw is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    code, channels, rate, bits = fmt
    if channels < 1 or rate < 1:
        raise FormatError(f"{path}: invalid channel count or sample rate")

    if code == 0x0001:  # integer PCM
        if bits == 8:
            x = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
            x = (x - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            b = np.frombuffer(raw[: len(raw) - len(raw) % 3], dtype=np.uint8)
            b = b.reshape(-1, 3).astype(np.int64)
            v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            v -= (v & 0x800000) << 1  # sign extension
            x = v.astype(np.float64) / float(1 << 23)
        else:
            raise FormatError(f"{path}: unsupported PCM bit depth {bits}")
    elif code == 0x0003:  # IEEE float
        if bits == 32:
            x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        elif bits == 64:
            x = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        else:
            raise FormatError(f"{path}: unsupported float bit depth {bits}")
    else:
        name = _WAVE_FORMAT_NAMES.get(code, f"format 0x{code:04X}")
        raise FormatError(f"{path}: unsupported codec {name}")

    if channels > 1:
        x = x[: len(x) - len(x) % channels].reshape(-1, channels).mean(axis=1)
    return AudioClip(samples=x, sample_rate=int(rate))


def frame_signal(clip: AudioClip, cfg: FramingConfig) -> np.ndarray:
    """Slice a clip into overlapping windowed frames.

    Pre-emphasis is applied to the whole signal first; the trailing partial
    frame is discarded. Returns an (n_frames, frame_len) array.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    win = int(cfg.frame_ms * clip.sample_rate / 1000)
    hop = int(cfg.step_ms * clip.sample_rate / 1000)
    if win < 1 or hop < 1:
        raise ConfigError("frame and step must span at least one sample")
    if x.size < win:
        raise EmptyInputError(
            f"clip of {x.size} samples is shorter than one {win}-sample frame"
        )
    if cfg.preemphasis > 0:
        x = np.concatenate([x[:1], x[1:] - cfg.preemphasis * x[:-1]])
    n_frames = (x.size - win) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[:: hop][:n_frames]
    frames = np.array(frames, dtype=np.float64)
    if cfg.window == "hanning":
        frames *= np.hanning(win)
    return frames


def remove_silence(frames: np.ndarray, energy_floor_db: float = 30.0):
    """Drop frames whose log energy falls more than energy_floor_db below
    the loudest frame. Returns (kept_frames, kept_indices)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise EmptyInputError("need at least one frame")
    energy_db = 10.0 * np.log10(np.sum(frames * frames, axis=1) + 1e-300)
    keep = energy_db >= energy_db.max() - energy_floor_db
    if not np.any(keep):
        raise EmptyResultError("silence removal dropped every frame")
    idx = np.flatnonzero(keep)
    return frames[idx], idx


def _mel(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank spanning 0 to sample_rate/2.

    Rows are unit-peak triangles evaluated at the rfft bin frequencies;
    shape (n_filters, n_fft // 2 + 1).
    """
    edges_hz = _mel_inv(np.linspace(0.0, _mel(sample_rate / 2.0), n_filters + 2))
    bins_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    fb = np.zeros((n_filters, bins_hz.size))
    for m in range(n_filters):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bins_hz - lo) / (mid - lo)
        down = (hi - bins_hz) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mfcc(
    frames: np.ndarray,
    sample_rate: int,
    n_coeffs: int = 16,
    n_filters: int = 40,
) -> np.ndarray:
    """Mel-frequency cepstra of windowed frames, coefficients c1..c_n.

    Per frame: power spectrum -> mel triangular filterbank -> log (floored
    at 1e-10) -> orthonormal DCT-II. The energy coefficient c0 is excluded,
    so the output is (n_frames, n_coeffs).
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if n_coeffs >= n_filters:
        raise ConfigError(
            f"n_coeffs ({n_coeffs}) must be smaller than n_filters ({n_filters})"
        )
    n_fft = 1
    while n_fft < frames.shape[1]:
        n_fft *= 2
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    power = spec.real**2 + spec.imag**2
    fb = mel_filterbank(n_filters, n_fft, sample_rate)
    mel_energy = power @ fb.T
    log_energy = np.log(np.maximum(mel_energy, 1e-10))
    cepstra = scipy.fft.dct(log_energy, type=2, norm="ortho", axis=1)
    return cepstra[:, 1 : n_coeffs + 1]


def _delta(X: np.ndarray, window: int) -> np.ndarray:
    """Regression delta over the valid interior; output has 2*window fewer rows."""
    T = X.shape[0]
    denom = 2.0 * sum(w * w for w in range(1, window + 1))
    out = np.zeros((T - 2 * window, X.shape[1]))
    for w in range(1, window + 1):
        out += w * (X[window + w : T - window + w] - X[window - w : T - window - w])
    return out / denom


def delta_stack(X: np.ndarray, window: int = 2) -> np.ndarray:
    """Stack frames with velocity and acceleration rows: [x, dx, ddx].

    dx comes from the standard regression over +-window neighbors; ddx is
    the same regression applied to the dx sequence (edge-replicated at its
    ends). The first and last `window` frames are dropped, so the output is
    (T - 2*window, 3D).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T = X.shape[0]
    if T <= 2 * window:
        raise InsufficientFramesError_raise(T, 2 * window)
    d1 = _delta(X, window)
    d1_padded = np.concatenate(
        [np.repeat(d1[:1], window, axis=0), d1, np.repeat(d1[-1:], window, axis=0)]
    )
    d2 = _delta(d1_padded, window)
    return np.hstack([X[window : T - window], d1, d2])


def InsufficientFramesError_raise(T, needed):
    raise InsufficientDataError(f"need more than {needed} frames, got {T}")


def super_frames(X: np.ndarray, cfg: SuperFrameConfig) -> np.ndarray:
    """Concatenate each frame with its tau-past and tau-future neighbors.

    Row t' = [x(t-tau), x(t), x(t+tau)] for the interior frames; the first
    and last tau frames are dropped, giving (T - 2*tau, 3D).
    """
    if cfg.mode != MODE_RAW_CONTEXT:
        raise ConfigError(f"super_frames requires mode={MODE_RAW_CONTEXT!r}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T, tau = X.shape[0], cfg.tau
    if T <= 2 * tau:
        raise InsufficientDataError(f"need more than {2 * tau} frames, got {T}")
    return np.hstack([X[: T - 2 * tau], X[tau : T - tau], X[2 * tau :]])


def utterance_features(
    clip: AudioClip,
    framing: FramingConfig,
    sf_cfg: SuperFrameConfig,
    n_coeffs: int = 16,
    n_filters: int = 40,
    energy_floor_db: float = 30.0,
    delta_window: int = 2,
) -> np.ndarray:
    """Full front end for one utterance: frame, de-silence, MFCC, stack.

    Super-frame adjacency is taken over the silence-stripped frame sequence.
    """
    frames = frame_signal(clip, framing)
    kept, _ = remove_silence(frames, energy_floor_db)
    cepstra = mfcc(kept, clip.sample_rate, n_coeffs=n_coeffs, n_filters=n_filters)
    if sf_cfg.mode == MODE_RAW_CONTEXT:
        return super_frames(cepstra, sf_cfg)
    return delta_stack(cepstra, window=delta_window)


def write_feature_cache(path, X: np.ndarray):
    """Write a T x D float64 feature matrix in the binary cache format."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ConfigError("feature matrix contains non-finite entries")
    header = FEATURE_CACHE_MAGIC + struct.pack(
        "<III", FEATURE_CACHE_VERSION, X.shape[0], X.shape[1]
    )
    Path(path).write_bytes(header + X.astype("<f8").tobytes(order="C"))


def read_feature_cache(path) -> np.ndarray:
    """Read a feature matrix written by write_feature_cache."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FEATURE_CACHE_MAGIC:
        raise FormatError(f"{path}: not a feature cache file")
    version, rows, cols = struct.unpack_from("<III", data, 4)
    if version != FEATURE_CACHE_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    expected = 16 + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != expected {expected}")
    return (
        np.frombuffer(data, dtype="<f8", offset=16).reshape(rows, cols).astype(np.float64)
    )


def check_feature_matrix(X: np.ndarray, expected_dim: int | None = None) -> np.ndarray:
    """Validate a feature matrix: 2-D, finite, optional dimension check."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ConfigError("feature matrix contains non-finite entries")
    if expected_dim is not None and X.shape[1] != expected_dim:
        raise DimensionMismatchError(
            f"feature dimension {X.shape[1]} != expected {expected_dim}"
        )
    return X
