"""Audio ingestion, framing, and dual-threshold silence removal.

A frame is kept as speech when both its short-time energy rate and its
spectral centroid exceed thresholds estimated from the bimodal histograms
of those statistics over the whole utterance.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedAudioError

SUPPORTED_SAMPLE_RATES = (8000, 16000)

DEFAULT_ENERGY_WEIGHT = 5.0
DEFAULT_CENTROID_WEIGHT = 2.0
DEFAULT_MIN_SEGMENT_FRAMES = 5


@dataclass
class AudioBuffer:
    """Mono PCM samples scaled to [-1, 1] plus their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise UnsupportedAudioError(
                "unsupported channel count: expected a 1-D mono sample array"
            )
        if self.sample_rate_hz not in SUPPORTED_SAMPLE_RATES:
            raise UnsupportedAudioError(
                "unsupported sample rate %r (supported: %s)"
                % (self.sample_rate_hz, SUPPORTED_SAMPLE_RATES)
            )

    @property
    def duration_sec(self):
        return len(self.samples) / float(self.sample_rate_hz)


@dataclass
class FramePlan:
    """Frame length and hop, both in samples."""

    frame_len_samples: int
    hop_samples: int

    def __post_init__(self):
        if self.frame_len_samples < 1 or self.hop_samples < 1:
            raise ValueError("frame length and hop must be positive")
        if self.hop_samples > self.frame_len_samples:
            raise ValueError("hop must not exceed the frame length")

    @classmethod
    def from_ms(cls, sample_rate_hz, frame_ms=25.0, hop_ms=10.0):
        return cls(
            frame_len_samples=int(round(sample_rate_hz * frame_ms / 1000.0)),
            hop_samples=int(round(sample_rate_hz * hop_ms / 1000.0)),
        )

    def num_frames(self, num_samples):
        if num_samples < self.frame_len_samples:
            return 0
        return (num_samples - self.frame_len_samples) // self.hop_samples + 1


@dataclass
class VadResult:
    """Per-frame VAD statistics plus the final speech decision."""

    frame_energy: np.ndarray
    frame_centroid: np.ndarray
    speech_mask: np.ndarray
    segments: list = field(default_factory=list)
    energy_threshold: float | None = None
    centroid_threshold: float | None = None

    @property
    def compression_ratio(self):
        """Retained fraction of the input (frame-count based)."""
        if len(self.speech_mask) == 0:
            return 0.0
        return float(np.count_nonzero(self.speech_mask)) / len(self.speech_mask)


def read_wav(path):
    """Read a RIFF/WAVE file into an AudioBuffer.

    Only PCM 16-bit mono at 8 or 16 kHz is accepted; samples are scaled to
    [-1, 1] by dividing by 32768.
    """
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            if channels != 1:
                raise UnsupportedAudioError(
                    "unsupported channel count %d in %s (mono required)" % (channels, path)
                )
            width = handle.getsampwidth()
            if width != 2:
                raise UnsupportedAudioError(
                    "unsupported sample width %d-bit in %s (16-bit PCM required)"
                    % (8 * width, path)
                )
            comptype = handle.getcomptype()
            if comptype != "NONE":
                raise UnsupportedAudioError(
                    "unsupported encoding %r in %s (uncompressed PCM required)"
                    % (comptype, path)
                )
            rate = handle.getframerate()
            if rate not in SUPPORTED_SAMPLE_RATES:
                raise UnsupportedAudioError(
                    "unsupported sample rate %d in %s (supported: %s)"
                    % (rate, path, SUPPORTED_SAMPLE_RATES)
                )
            raw = handle.readframes(handle.getnframes())
    except wave.Error as exc:
        raise UnsupportedAudioError("unsupported encoding in %s: %s" % (path, exc)) from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, audio):
    """Write an AudioBuffer as PCM16 mono RIFF/WAVE."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(audio.sample_rate_hz)
        handle.writeframes(pcm.tobytes())


def frame_signal(audio, plan):
    """Slice a signal into overlapping frames (trailing partial dropped).

    Frame i starts at i * hop_samples. Returns a (num_frames, frame_len)
    array.
    """
    if isinstance(audio, AudioBuffer):
        x = audio.samples
    else:
        x = np.asarray(audio, dtype=np.float64)
    n = plan.frame_len_samples
    hop = plan.hop_samples
    if len(x) < n:
        raise ValueError(
            "signal of %d samples is shorter than one frame (%d samples)" % (len(x), n)
        )
    count = (len(x) - n) // hop + 1
    idx = hop * np.arange(count)[:, None] + np.arange(n)[None, :]
    return x[idx]


def energy_rate(frame):
    """Mean squared magnitude of the frame samples."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("energy of an empty frame is undefined")
    return float(np.mean(np.abs(frame) ** 2))


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def centroid_from_spectrum(mags):
    """Centroid of a one-sided magnitude spectrum with the DC bin removed.

    Bin k (1-based) is weighted by k + 1, so a single active bin k yields
    k + 1 and a flat spectrum over K bins yields (K + 3) / 2.
    """
    mags = np.asarray(mags, dtype=np.float64)
    total = mags.sum()
    if total <= 0.0:
        return 0.0
    k = np.arange(1, len(mags) + 1, dtype=np.float64)
    return float(np.sum((k + 1.0) * mags) / total)


def spectral_centroid(frame, nfft=None):
    """Spectral centroid of one frame.

    The DFT size is the next power of two >= the frame length (zero padded)
    unless given. All-zero frames return 0.0, which downstream treats as
    non-speech.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("spectral centroid of an empty frame is undefined")
    if not np.any(frame):
        return 0.0
    if nfft is None:
        nfft = _next_pow2(len(frame))
    mags = np.abs(np.fft.rfft(frame, nfft))[1:]
    return centroid_from_spectrum(mags)


def _histogram_modes(values, bins=50, smooth=3, height_ratio=0.1, valley_ratio=0.3,
                     min_separation=5, mass_fraction=0.1):
    """Positions of two genuinely separated smoothed-histogram modes.

    The tallest local maximum is always a mode. A second mode must be at
    least height_ratio of the first, at least min_separation bins away,
    hold at least mass_fraction of the samples near its peak, and be
    separated from the first by a valley dipping below valley_ratio of the
    smaller peak; sampling bumps on a unimodal histogram fail those
    requirements. Returns the (up to two) positions sorted ascending.
    """
    values = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    kernel = np.ones(smooth) / float(smooth)
    sm = np.convolve(counts.astype(np.float64), kernel, mode="same")
    peaks = []
    for i in range(len(sm)):
        left = sm[i - 1] if i > 0 else -np.inf
        right = sm[i + 1] if i < len(sm) - 1 else -np.inf
        if sm[i] > 0 and sm[i] >= left and sm[i] > right:
            peaks.append((sm[i], i))
    if not peaks:
        return []
    peaks.sort(key=lambda p: (-p[0], p[1]))
    main_height, main_idx = peaks[0]
    for height, idx in peaks[1:]:
        if height < height_ratio * main_height:
            continue
        if abs(idx - main_idx) < min_separation:
            continue
        mass = counts[max(0, idx - smooth):idx + smooth + 1].sum()
        if mass < mass_fraction * values.size:
            continue
        lo, hi = sorted((main_idx, idx))
        valley = sm[lo + 1:hi].min()
        if valley < valley_ratio * min(height, main_height):
            return sorted((centers[main_idx], centers[idx]))
    return [centers[main_idx]]


def estimate_thresholds(values, weight, bins=50, smooth=3):
    """Histogram-mode threshold T = (weight*M1 + M2) / (weight + 1).

    M1 <= M2 are the positions of the two most prominent local maxima of a
    smoothed histogram of the values; with fewer than two maxima the median
    of the values is returned instead.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 10:
        raise ValueError("threshold estimation needs at least 10 values, got %d" % values.size)
    if weight <= 0:
        raise ValueError("threshold weight must be positive")
    modes = _histogram_modes(values, bins=bins, smooth=smooth)
    if len(modes) < 2:
        return float(np.median(values))
    m1, m2 = modes
    return float((weight * m1 + m2) / (weight + 1.0))


def _runs(mask, value):
    """Half-open (start, end) runs where mask == value."""
    mask = np.asarray(mask, dtype=bool)
    out = []
    start = None
    for i, m in enumerate(mask):
        if (m == value) and start is None:
            start = i
        elif (m != value) and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def _bridge_short_gaps(mask, min_frames):
    """Fill non-speech gaps shorter than min_frames between speech runs."""
    mask = mask.copy()
    speech = _runs(mask, True)
    for (_, prev_end), (next_start, _) in zip(speech[:-1], speech[1:]):
        if next_start - prev_end < min_frames:
            mask[prev_end:next_start] = True
    return mask

def _drop_short_runs(mask, min_frames):
    mask = mask.copy()
    for start, end in _runs(mask, True):
        if end - start < min_frames:
            mask[start:end] = False
    return mask


def mask_to_segments(mask):
    """Speech mask -> sorted, disjoint half-open (start_frame, end_frame) list."""
    return _runs(mask, True)


def segments_to_mask(segments, num_frames):
    mask = np.zeros(num_frames, dtype=bool)
    for start, end in segments:
        mask[start:end] = True
    return mask


def remove_silence(
    audio,
    plan,
    energy_weight=DEFAULT_ENERGY_WEIGHT,
    centroid_weight=DEFAULT_CENTROID_WEIGHT,
    min_segment_frames=DEFAULT_MIN_SEGMENT_FRAMES,
    bins=50,
):
    """Dual-threshold VAD over framed audio.

    A frame is speech when its energy rate and spectral centroid both exceed
    their histogram-mode thresholds. A statistic whose histogram shows fewer
    than two modes imposes no constraint (there is nothing to separate), so
    uniformly loud input is kept whole. Speech gaps shorter than
    min_segment_frames are bridged, then speech runs shorter than
    min_segment_frames are dropped.
    """
    frames = frame_signal(audio, plan)
    if len(frames) < 10:
        raise ValueError("silence removal needs at least 10 frames, got %d" % len(frames))
    energy = np.mean(frames * frames, axis=1)

    nfft = _next_pow2(plan.frame_len_samples)
    mags = np.abs(np.fft.rfft(frames, nfft, axis=1))[:, 1:]
    totals = mags.sum(axis=1)
    weights = np.arange(2, mags.shape[1] + 2, dtype=np.float64)
    centroid = np.zeros(len(frames))
    nonzero = totals > 0.0
    centroid[nonzero] = (mags[nonzero] @ weights) / totals[nonzero]

    mask = nonzero.copy()
    t_energy = None
    t_centroid = None
    e_modes = _histogram_modes(energy, bins=bins)
    if len(e_modes) == 2:
        t_energy = (energy_weight * e_modes[0] + e_modes[1]) / (energy_weight + 1.0)
        mask &= energy > t_energy
    c_modes = _histogram_modes(centroid[nonzero], bins=bins) if np.any(nonzero) else []
    if len(c_modes) == 2:
        t_centroid = (centroid_weight * c_modes[0] + c_modes[1]) / (centroid_weight + 1.0)
        mask &= centroid > t_centroid

    mask = _bridge_short_gaps(mask, min_segment_frames)
    mask = _drop_short_runs(mask, min_segment_frames)
    return VadResult(
        frame_energy=energy,
        frame_centroid=centroid,
        speech_mask=mask,
        segments=mask_to_segments(mask),
        energy_threshold=None if t_energy is None else float(t_energy),
        centroid_threshold=None if t_centroid is None else float(t_centroid),
    )


def segment_sample_ranges(segments, plan, num_samples=None):
    """Frame segments -> non-overlapping (start_sample, end_sample) ranges."""
    ranges = []
    prev_end = 0
    for start_f, end_f in segments:
        start = start_f * plan.hop_samples
        end = (end_f - 1) * plan.hop_samples + plan.frame_len_samples
        start = max(start, prev_end)
        if num_samples is not None:
            end = min(end, num_samples)
        if end > start:
            ranges.append((start, end))
            prev_end = end
    return ranges


def trim_audio(audio, vad, plan):
    """Concatenate the speech portions of the audio."""
    ranges = segment_sample_ranges(vad.segments, plan, num_samples=len(audio.samples))
    if not ranges:
        return AudioBuffer(np.zeros(0), audio.sample_rate_hz)
    pieces = [audio.samples[s:e] for s, e in ranges]
    return AudioBuffer(np.concatenate(pieces), audio.sample_rate_hz)


def segments_to_text(segments, plan, sample_rate_hz):
    """One line per segment: `<start_sec>\\t<end_sec>` with 3 decimals."""
    lines = []
    for start_f, end_f in segments:
        start = start_f * plan.hop_samples / float(sample_rate_hz)
        end = ((end_f - 1) * plan.hop_samples + plan.frame_len_samples) / float(sample_rate_hz)
        lines.append("%.3f\t%.3f" % (start, end))
    return "\n".join(lines) + ("\n" if lines else "")
