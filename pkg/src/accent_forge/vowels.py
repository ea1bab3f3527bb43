"""Phoneme-label ingestion, vowel selection, and per-vowel feature pooling.

Label files follow the HTK convention: one segment per line,
`<start> <end> <label> [<score>]` with times as integers in 100 ns units.
Producing them (alignment or recognition) is outside this package.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import LabelParseError
from .frontend import FeatureMatrix

ARPABET_VOWELS = (
    "aa", "ae", "ah", "ao", "aw", "ay", "eh", "er",
    "ey", "ih", "iy", "ow", "oy", "uh", "uw",
)
VOWEL_INDEX = {v: i for i, v in enumerate(ARPABET_VOWELS)}
NUM_VOWELS = len(ARPABET_VOWELS)

_HTK_UNITS_PER_SEC = 10 ** 7
_STRESS_RE = re.compile(r"\d+$")


@dataclass
class PhoneSegment:
    """One labeled time interval; non-vowel labels are kept but flagged."""

    start_sec: float
    end_sec: float
    label: str
    confidence: float | None = None

    def __post_init__(self):
        if self.start_sec < 0 or self.end_sec <= self.start_sec:
            raise ValueError(
                "segment must satisfy 0 <= start < end, got [%r, %r)"
                % (self.start_sec, self.end_sec)
            )

    @property
    def is_vowel(self):
        return self.label in VOWEL_INDEX


def normalize_phone(label):
    """Lowercase and strip trailing stress digits (AA1 -> aa)."""
    return _STRESS_RE.sub("", label.lower())


def parse_label_file(path):
    """Parse an HTK-style label file into PhoneSegments.

    Labels are normalized to lowercase base phones; the optional fourth
    column is a confidence score. Overlapping segments are rejected.
    """
    segments = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) not in (3, 4):
                raise LabelParseError(
                    "%s:%d: expected '<start> <end> <label> [<score>]', got %r"
                    % (path, lineno, line.rstrip("\n"))
                )
            try:
                start_units = int(fields[0])
                end_units = int(fields[1])
            except ValueError as exc:
                raise LabelParseError(
                    "%s:%d: times must be integers in 100 ns units" % (path, lineno)
                ) from exc
            confidence = None
            if len(fields) == 4:
                try:
                    confidence = float(fields[3])
                except ValueError as exc:
                    raise LabelParseError(
                        "%s:%d: score %r is not a number" % (path, lineno, fields[3])
                    ) from exc
            if end_units <= start_units:
                raise LabelParseError(
                    "%s:%d: segment end %d not after start %d"
                    % (path, lineno, end_units, start_units)
                )
            segments.append(
                PhoneSegment(
                    start_sec=start_units / _HTK_UNITS_PER_SEC,
                    end_sec=end_units / _HTK_UNITS_PER_SEC,
                    label=normalize_phone(fields[2]),
                    confidence=confidence,
                )
            )
    ordered = sorted(segments, key=lambda s: s.start_sec)
    for prev, cur in zip(ordered[:-1], ordered[1:]):
        if cur.start_sec < prev.end_sec - 1e-12:
            raise LabelParseError(
                "%s: segments [%g, %g) and [%g, %g) overlap"
                % (path, prev.start_sec, prev.end_sec, cur.start_sec, cur.end_sec)
            )
    return segments


def write_label_file(path, segments):
    """Serialize segments in the same HTK format parse_label_file reads."""
    with open(path, "w", encoding="utf-8") as handle:
        for seg in segments:
            start = int(round(seg.start_sec * _HTK_UNITS_PER_SEC))
            end = int(round(seg.end_sec * _HTK_UNITS_PER_SEC))
            if seg.confidence is None:
                handle.write("%d %d %s\n" % (start, end, seg.label))
            else:
                handle.write("%d %d %s %r\n" % (start, end, seg.label, seg.confidence))


def filter_by_confidence(segments, threshold):
    """Keep segments scoring >= threshold; unscored segments are trusted."""
    return [s for s in segments if s.confidence is None or s.confidence >= threshold]


def calibrate_threshold(dev_corpus, grid, classify):
    """Grid value maximizing dev accuracy of the injected vowel classifier.

    dev_corpus items are (features, segments, accent) triples; classify is
    called as classify(features, filtered_segments) and returns a label (or
    None, counted as a miss). Ties pick the lowest threshold.
    """
    grid = sorted(grid)
    if not grid:
        raise ValueError("calibration grid is empty")
    dev_corpus = list(dev_corpus)
    if not dev_corpus:
        raise ValueError("calibration needs a non-empty dev corpus")
    best_threshold = None
    best_accuracy = -1.0
    for threshold in grid:
        correct = 0
        for feats, segments, accent in dev_corpus:
            predicted = classify(feats, filter_by_confidence(segments, threshold))
            if predicted == accent:
                correct += 1
        accuracy = correct / len(dev_corpus)
        if accuracy > best_accuracy:
            best_accuracy = accuracy
            best_threshold = threshold
    return best_threshold


def pool_vowel_features(feats, segments):
    """Per-vowel feature matrices pooled by frame-center membership.

    Frame k belongs to a segment when its center time (k + 0.5) * hop lies
    in [start, end). Every Arpabet vowel maps to a matrix (possibly empty);
    non-vowel segments are ignored.
    """
    hop = feats.frame_hop_sec
    num_frames = feats.num_frames
    centers = (np.arange(num_frames) + 0.5) * hop
    duration = num_frames * hop
    masks = {v: np.zeros(num_frames, dtype=bool) for v in ARPABET_VOWELS}
    for seg in segments:
        if not seg.is_vowel:
            continue
        if seg.end_sec > duration + 1e-9:
            raise ValueError(
                "segment [%g, %g) extends beyond the utterance end %g"
                % (seg.start_sec, seg.end_sec, duration)
            )
        masks[seg.label] |= (centers >= seg.start_sec) & (centers < seg.end_sec)
    pooled = {}
    for vowel in ARPABET_VOWELS:
        mask = masks[vowel]
        tags = None if feats.tags is None else feats.tags[mask]
        pooled[vowel] = FeatureMatrix(feats.data[mask], hop, tags)
    return pooled


def pool_by_tags(feats):
    """Per-vowel pooling from the archive tag channel (tag = vowel index + 1)."""
    if feats.tags is None:
        raise ValueError("feature matrix has no tags")
    pooled = {}
    for i, vowel in enumerate(ARPABET_VOWELS):
        mask = feats.tags == i + 1
        pooled[vowel] = FeatureMatrix(feats.data[mask], feats.frame_hop_sec)
    return pooled


def vowel_popularity(frame_counts):
    """Popularity vector r over the fixed vowel order; sums to 1."""
    counts = np.array([float(frame_counts.get(v, 0)) for v in ARPABET_VOWELS])
    total = counts.sum()
    if total <= 0:
        raise ValueError("no vowel frames at all; popularity is undefined")
    return counts / total
