"""Cepstral frontend: PLP-style static features, deltas, MVN, feature warping.

The static recipe per frame: Hamming window, power spectrum, Bark
critical-band integration, equal-loudness weighting, cube-root compression,
autocorrelation via inverse DFT, Levinson-Durbin linear prediction, and the
LP-to-cepstrum recursion.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import FormatError

FEATURE_MAGIC = b"AFF1"

_SPECTRUM_FLOOR = 1e-30


@dataclass
class FrontendConfig:
    lp_order: int = 12
    num_ceps: int = 13
    num_filters: int = 21
    delta_window: int = 2
    warp_window_frames: int = 301
    mvn_before_warp: bool = True

    def __post_init__(self):
        if self.num_ceps > self.lp_order + 1:
            raise ValueError("num_ceps must be <= lp_order + 1")
        if self.warp_window_frames < 3 or self.warp_window_frames % 2 == 0:
            raise ValueError("warp window must be odd and >= 3")
        if self.num_filters < 3:
            raise ValueError("need at least 3 critical-band filters")


@dataclass
class FeatureMatrix:
    """K frames x M dims of features, plus frame hop and optional frame tags."""

    data: np.ndarray
    frame_hop_sec: float = 0.01
    tags: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("feature data must be 2-D (frames x dims)")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise ValueError("feature data contains NaN or Inf")
        if self.tags is not None:
            self.tags = np.asarray(self.tags, dtype=np.uint8)
            if self.tags.shape != (self.data.shape[0],):
                raise ValueError("tags must have one entry per frame")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def head(self, max_frames):
        """First max_frames frames (used for the test-time duration cap)."""
        if max_frames is None or self.num_frames <= max_frames:
            return self
        tags = None if self.tags is None else self.tags[:max_frames]
        return FeatureMatrix(self.data[:max_frames], self.frame_hop_sec, tags)


def feature_array(feats):
    """Accept a FeatureMatrix or a plain 2-D array and return the array."""
    if isinstance(feats, FeatureMatrix):
        return feats.data
    arr = np.asarray(feats, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D feature array")
    return arr


@dataclass
class MvnStats:
    mean: np.ndarray
    std: np.ndarray
    floored_dims: tuple = ()


def hz_to_bark(f):
    return 6.0 * np.arcsinh(np.asarray(f, dtype=np.float64) / 600.0)


def bark_filterbank(nfft, sample_rate_hz, num_filters):
    """Critical-band weights (num_filters x one-sided bins).

    Trapezoidal filters on the Bark axis with +10 dB/Bark and -25 dB/Bark
    skirts, band centers equally spaced from 0 to the Nyquist Bark.
    """
    nbins = nfft // 2 + 1
    bin_barks = hz_to_bark(np.arange(nbins) * sample_rate_hz / float(nfft))
    nyq_bark = float(hz_to_bark(sample_rate_hz / 2.0))
    step = nyq_bark / (num_filters - 1)
    weights = np.zeros((num_filters, nbins))
    for i in range(num_filters):
        mid = i * step
        lo = bin_barks - mid - 0.5
        hi = bin_barks - mid + 0.5
        weights[i] = 10.0 ** np.minimum(0.0, np.minimum(hi, -2.5 * lo))
    return weights


def equal_loudness(freqs_hz):
    """Equal-loudness weighting at the given frequencies."""
    fsq = np.asarray(freqs_hz, dtype=np.float64) ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * (fsq + 1.44e6) / (fsq + 9.61e6)


def levinson(r, order):
    """Levinson-Durbin recursion.

    Returns (a, gain) where a = [1, a1..ap] is the prediction polynomial
    A(z) = 1 + sum a_k z^-k and gain is the final prediction-error power.
    """
    r = np.asarray(r, dtype=np.float64)
    if len(r) < order + 1:
        raise ValueError("autocorrelation too short for LP order %d" % order)
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0:
        raise ValueError("non-positive zero-lag autocorrelation")
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i + 1] = a[1:i + 1] + k * a[i - 1::-1][:i]
        err *= 1.0 - k * k
        if err <= 0:
            err = _SPECTRUM_FLOOR
    return a, float(err)


def lp_to_cepstrum(a, gain, num_ceps):
    """Cepstrum of the all-pole model gain / A(z).

    c[0] = log(gain); c[n] = -a[n] - (1/n) sum_{k=1}^{n-1} k c[k] a[n-k].
    """
    order = len(a) - 1
    c = np.zeros(num_ceps)
    c[0] = np.log(gain)
    for n in range(1, num_ceps):
        acc = 0.0
        for k in range(1, n):
            if n - k <= order:
                acc += k * c[k] * a[n - k]
        c[n] = (-a[n] if n <= order else 0.0) - acc / n
    return c


def _batch_levinson(autocorr, order):
    coeffs = np.empty((autocorr.shape[0], order + 1))
    gains = np.empty(autocorr.shape[0])
    for i in range(autocorr.shape[0]):
        coeffs[i], gains[i] = levinson(autocorr[i], order)
    return coeffs, gains


def plp_static(frames, sample_rate_hz, cfg=None, frame_hop_sec=0.01):
    """Static cepstra (K x num_ceps) from speech frames.

    Frames must be a rectangular (K x N) array of post-VAD speech samples.
    """
    if cfg is None:
        cfg = FrontendConfig()
    try:
        frames = np.asarray(frames, dtype=np.float64)
    except ValueError as exc:
        raise ValueError("frames must form a rectangular (K x N) array") from exc
    if frames.ndim != 2:
        raise ValueError("frames must form a rectangular (K x N) array")
    num_frames, frame_len = frames.shape
    if num_frames < 1:
        raise ValueError("need at least one frame")

    nfft = 1
    while nfft < frame_len:
        nfft *= 2
    window = np.hamming(frame_len)
    spectrum = np.abs(np.fft.rfft(frames * window, nfft, axis=1)) ** 2

    fbank = bark_filterbank(nfft, sample_rate_hz, cfg.num_filters)
    bands = spectrum @ fbank.T

    nyq_bark = float(hz_to_bark(sample_rate_hz / 2.0))
    centers_bark = np.arange(cfg.num_filters) * (nyq_bark / (cfg.num_filters - 1))
    centers_hz = 600.0 * np.sinh(centers_bark / 6.0)
    bands = bands * equal_loudness(centers_hz)

    bands = np.maximum(bands, _SPECTRUM_FLOOR) ** 0.33
    # edge bands are unreliable as integrated; replace with their neighbors
    bands[:, 0] = bands[:, 1]
    bands[:, -1] = bands[:, -2]

    # treat the compressed band spectrum as a power spectrum of a short
    # sequence: inverse DFT of the even extension gives its autocorrelation
    even = np.concatenate([bands, bands[:, -2:0:-1]], axis=1)
    autocorr = np.fft.ifft(even, axis=1).real[:, : cfg.num_filters]

    coeffs, gains = _batch_levinson(autocorr, cfg.lp_order)
    ceps = np.empty((num_frames, cfg.num_ceps))
    for i in range(num_frames):
        ceps[i] = lp_to_cepstrum(coeffs[i], gains[i], cfg.num_ceps)
    return FeatureMatrix(ceps, frame_hop_sec=frame_hop_sec)


def _regression_deltas(data, window):
    num = np.zeros_like(data)
    k = data.shape[0]
    padded = np.vstack([data[:1]] * window + [data] + [data[-1:]] * window)
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    for n in range(1, window + 1):
        num += n * (padded[window + n: window + n + k] - padded[window - n: window - n + k])
    return num / denom


def append_deltas(feat, window=2):
    """Append regression deltas and delta-deltas (dim -> 3x dim)."""
    data = feature_array(feat)
    if data.shape[0] < 2 * window + 1:
        raise ValueError(
            "need at least %d frames for delta window %d, got %d"
            % (2 * window + 1, window, data.shape[0])
        )
    d1 = _regression_deltas(data, window)
    d2 = _regression_deltas(d1, window)
    out = np.hstack([data, d1, d2])
    if isinstance(feat, FeatureMatrix):
        return FeatureMatrix(out, feat.frame_hop_sec, feat.tags)
    return FeatureMatrix(out)


def mvn(feat, floor=1e-10):
    """Per-utterance, per-dimension zero mean / unit variance.

    Returns the normalized features plus the statistics used, so they can be
    persisted. Zero-variance dimensions are floored and reported.
    """
    data = feature_array(feat)
    if data.shape[0] < 2:
        raise ValueError("MVN needs at least 2 frames")
    mean = data.mean(axis=0)
    var = data.var(axis=0)
    floored = tuple(int(i) for i in np.nonzero(var < floor)[0])
    var = np.maximum(var, floor)
    std = np.sqrt(var)
    out = (data - mean) / std
    stats = MvnStats(mean=mean, std=std, floored_dims=floored)
    if isinstance(feat, FeatureMatrix):
        return FeatureMatrix(out, feat.frame_hop_sec, feat.tags), stats
    return FeatureMatrix(out), stats


def feature_warp(feat, window=301):
    """Short-term Gaussianization (feature warping).

    Each value is replaced by the standard-normal quantile of its rank
    within a sliding window of length L: Phi^-1((r - 0.5) / L). Windows are
    shifted (not shrunk) at the utterance edges; ties rank earlier frames
    lower. If the utterance is shorter than the window, L shrinks to the
    largest odd length available.
    """
    data = feature_array(feat)
    num_frames, dim = data.shape
    length = min(window, num_frames)
    if length % 2 == 0:
        length -= 1
    if length < 1:
        raise ValueError("empty feature matrix")
    half = length // 2
    starts = np.clip(np.arange(num_frames) - half, 0, num_frames - length)
    win_idx = starts[:, None] + np.arange(length)[None, :]
    pos = np.arange(num_frames)[:, None]
    out = np.empty_like(data)
    for d in range(dim):
        col = data[:, d]
        windows = col[win_idx]
        center = col[:, None]
        less = np.count_nonzero(windows < center, axis=1)
        ties_before = np.count_nonzero((windows == center) & (win_idx < pos), axis=1)
        ranks = 1 + less + ties_before
        out[:, d] = ndtri((ranks - 0.5) / length)
    if isinstance(feat, FeatureMatrix):
        return FeatureMatrix(out, feat.frame_hop_sec, feat.tags)
    return FeatureMatrix(out)


def write_feature_archive(path, feat):
    """Binary feature archive: AFF1, u32 K, u32 M, f64 hop, f64 data, u8 tags."""
    with open(path, "wb") as handle:
        handle.write(FEATURE_MAGIC)
        handle.write(struct.pack("<II", feat.num_frames, feat.dim))
        handle.write(struct.pack("<d", feat.frame_hop_sec))
        handle.write(np.ascontiguousarray(feat.data, dtype="<f8").tobytes())
        if feat.tags is not None:
            handle.write(feat.tags.astype(np.uint8).tobytes())


def read_feature_archive(path):
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != FEATURE_MAGIC:
            raise FormatError(
                "bad magic %r in %s (expected %r)" % (magic, path, FEATURE_MAGIC)
            )
        header = handle.read(16)
        if len(header) != 16:
            raise FormatError("truncated feature archive header in %s" % path)
        num_frames, dim = struct.unpack("<II", header[:8])
        hop = struct.unpack("<d", header[8:])[0]
        body = handle.read(num_frames * dim * 8)
        if len(body) != num_frames * dim * 8:
            raise FormatError("truncated feature data in %s" % path)
        data = np.frombuffer(body, dtype="<f8").reshape(num_frames, dim)
        tag_bytes = handle.read(num_frames)
        tags = None
        if len(tag_bytes) == num_frames and num_frames > 0:
            tags = np.frombuffer(tag_bytes, dtype=np.uint8)
    return FeatureMatrix(data.copy(), hop, None if tags is None else tags.copy())
