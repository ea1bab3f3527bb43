"""Accent classifiers: full-utterance MAP scoring and the vowel-weighted ensemble.

The ensemble scores each accent as sum_t w_t * loglik of that accent's
vowel-t model on the vowel-t frames; w combines vowel popularity with a
Hellinger-distance discriminativeness factor.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .frontend import FeatureMatrix
from .gmm import frame_logpdf, loglik
from .vowels import ARPABET_VOWELS, NUM_VOWELS


@dataclass
class AccentModelSet:
    """Ordered accent labels plus baseline and/or per-vowel model grids."""

    accents: list
    baseline: list | None = None
    vowel_grid: dict | None = None
    vowel_ubms: dict | None = None
    vowel_weights: np.ndarray | None = None

    def __post_init__(self):
        if len(self.accents) < 2:
            raise ValueError("need at least 2 accents")
        if self.baseline is not None and len(self.baseline) != len(self.accents):
            raise ValueError("one baseline model per accent required")
        if self.vowel_grid is not None:
            for vowel, models in self.vowel_grid.items():
                if vowel not in ARPABET_VOWELS:
                    raise ValueError("unknown vowel %r in model grid" % vowel)
                if len(models) != len(self.accents):
                    raise ValueError(
                        "vowel %r grid column has %d models for %d accents"
                        % (vowel, len(models), len(self.accents))
                    )
        if self.vowel_weights is not None:
            self.vowel_weights = np.asarray(self.vowel_weights, dtype=np.float64)
            if self.vowel_weights.shape != (NUM_VOWELS,):
                raise ValueError("vowel weights must have %d entries" % NUM_VOWELS)


@dataclass
class ClassificationResult:
    chosen_accent: str
    scores: np.ndarray
    per_vowel_scores: np.ndarray | None = None
    frames_used: int = 0


def classify_baseline(model_set, feats, max_frames=None):
    """Argmax of total log-likelihood over accents (earliest label on ties)."""
    if model_set.baseline is None:
        raise ValueError("model set has no baseline models")
    if isinstance(feats, FeatureMatrix):
        feats = feats.head(max_frames)
        num_frames = feats.num_frames
    else:
        feats = np.asarray(feats, dtype=np.float64)[:max_frames]
        num_frames = feats.shape[0]
    if num_frames < 1:
        raise ValueError("cannot classify an empty feature matrix")
    scores = np.array([loglik(m, feats) for m in model_set.baseline])
    best = int(np.argmax(scores))
    return ClassificationResult(
        chosen_accent=model_set.accents[best],
        scores=scores,
        frames_used=num_frames,
    )


def _hellinger_closed_form(p, q):
    """Exact Hellinger distance between two single diagonal Gaussians."""
    var_p = p.variances[0]
    var_q = q.variances[0]
    var_bar = 0.5 * (var_p + var_q)
    delta = p.means[0] - q.means[0]
    log_bc = float(
        np.sum(0.25 * np.log(var_p * var_q) - 0.5 * np.log(var_bar)
               - delta * delta / (8.0 * var_bar))
    )
    return float(np.sqrt(max(0.0, 1.0 - np.exp(log_bc))))


def hellinger_gmm(p, q, num_samples=50000, seed=0, method="auto"):
    """Hellinger distance between two diagonal-covariance GMMs in [0, 1].

    The Bhattacharyya coefficient BC = integral sqrt(p q) is estimated by
    importance sampling from the equal mixture m = (p + q) / 2; H is
    sqrt(1 - BC) clamped to [0, 1] and deterministic given the seed. Pairs
    of single Gaussians use the exact closed form unless method="mc".
    """
    if p.dim != q.dim:
        raise ValueError("mixture dims differ: %d vs %d" % (p.dim, q.dim))
    if method not in ("auto", "mc", "closed_form"):
        raise ValueError("unknown method %r" % method)
    if method == "closed_form" or (
        method == "auto" and p.num_components == 1 and q.num_components == 1
    ):
        if p.num_components != 1 or q.num_components != 1:
            raise ValueError("closed form requires single-component mixtures")
        return _hellinger_closed_form(p, q)
    if num_samples < 1000:
        raise ValueError("need at least 1000 Monte-Carlo samples")

    rng = np.random.default_rng(seed)
    mix_weights = np.concatenate([p.weights, q.weights]) / 2.0
    means = np.vstack([p.means, q.means])
    stds = np.sqrt(np.vstack([p.variances, q.variances]))
    comp = rng.choice(len(mix_weights), size=num_samples, p=mix_weights)
    z = means[comp] + stds[comp] * rng.standard_normal((num_samples, p.dim))
    log_p = frame_logpdf(p, z)
    log_q = frame_logpdf(q, z)
    log_m = np.logaddexp(log_p, log_q) - np.log(2.0)
    bc = float(np.mean(np.exp(0.5 * (log_p + log_q) - log_m)))
    return float(np.sqrt(np.clip(1.0 - bc, 0.0, 1.0)))


def pairwise_vowel_distances(vowel_grid, num_samples=50000, seed=0):
    """All-pairs Hellinger distances per vowel, in itertools.combinations order."""
    distances = {}
    for vowel in sorted(vowel_grid):
        models = vowel_grid[vowel]
        pair_values = []
        for k, (a, b) in enumerate(itertools.combinations(range(len(models)), 2)):
            pair_seed = seed + 1000 * ARPABET_VOWELS.index(vowel) + k
            pair_values.append(
                hellinger_gmm(models[a], models[b], num_samples=num_samples, seed=pair_seed)
            )
        distances[vowel] = np.array(pair_values)
    return distances


def vowel_discriminativeness(
    vowel_grid, mode="mean_distance", num_samples=50000, seed=0, distances=None
):
    """Per-vowel discriminativeness d over the fixed vowel order.

    mode "mean_distance" scores a vowel by the mean pairwise Hellinger
    distance among its per-accent models (far apart = discriminative);
    "reciprocal_mean" uses 1 / mean instead. Vowels missing from the grid
    get d = 0 and are excluded.
    """
    if mode not in ("mean_distance", "reciprocal_mean"):
        raise ValueError("unknown discriminativeness mode %r" % mode)
    if distances is None:
        distances = pairwise_vowel_distances(vowel_grid, num_samples=num_samples, seed=seed)
    d = np.zeros(NUM_VOWELS)
    for i, vowel in enumerate(ARPABET_VOWELS):
        if vowel not in vowel_grid:
            continue
        mean_dist = float(np.mean(distances[vowel]))
        if mode == "mean_distance":
            d[i] = mean_dist
        else:
            if mean_dist <= 0:
                warnings.warn(
                    "vowel %r has zero mean distance; excluded in reciprocal mode" % vowel,
                    stacklevel=2,
                )
                continue
            d[i] = 1.0 / mean_dist
    return d


def vowel_weights(popularity, discriminativeness):
    """w_t = r_t * d_t, normalized to sum 1."""
    r = np.asarray(popularity, dtype=np.float64)
    d = np.asarray(discriminativeness, dtype=np.float64)
    if r.shape != (NUM_VOWELS,) or d.shape != (NUM_VOWELS,):
        raise ValueError("popularity and discriminativeness must have %d entries" % NUM_VOWELS)
    if np.any(r < 0) or np.any(d < 0):
        raise ValueError("popularity and discriminativeness must be non-negative")
    w = r * d
    total = w.sum()
    if total <= 0:
        raise ValueError("all vowel weights are zero")
    return w / total


def classify_vowel_weighted(model_set, pooled, normalize_per_frame=False):
    """Weighted combination of per-vowel GMM scores.

    pooled maps vowel -> FeatureMatrix; vowels with no frames (or excluded
    from the grid) contribute nothing. normalize_per_frame divides each
    vowel's log-likelihood sum by its frame count before weighting.
    """
    if model_set.vowel_grid is None or model_set.vowel_weights is None:
        raise ValueError("model set has no vowel grid / weights")
    num_accents = len(model_set.accents)
    per_vowel = np.zeros((num_accents, NUM_VOWELS))
    totals = np.zeros(num_accents)
    frames_used = 0
    for t, vowel in enumerate(ARPABET_VOWELS):
        feats = pooled.get(vowel)
        if feats is None:
            continue
        num_frames = feats.num_frames if isinstance(feats, FeatureMatrix) else len(feats)
        if num_frames == 0 or vowel not in model_set.vowel_grid:
            continue
        weight = model_set.vowel_weights[t]
        for s in range(num_accents):
            ll = loglik(model_set.vowel_grid[vowel][s], feats)
            per_vowel[s, t] = ll
            totals[s] += weight * (ll / num_frames if normalize_per_frame else ll)
        frames_used += num_frames
    if frames_used == 0:
        raise ValueError("no vowel evidence: every pooled vowel matrix is empty")
    best = int(np.argmax(totals))
    return ClassificationResult(
        chosen_accent=model_set.accents[best],
        scores=totals,
        per_vowel_scores=per_vowel,
        frames_used=frames_used,
    )


@dataclass
class EvalReport:
    accuracy: float
    per_accent: dict
    confusion: np.ndarray
    accents: list
    mode: str
    feature_tag: str = ""
    seed: int | None = None
    num_utterances: int = 0

    def to_json(self):
        doc = {
            "accuracy": self.accuracy,
            "per_accent": self.per_accent,
            "confusion": [[int(v) for v in row] for row in self.confusion],
            "accents": list(self.accents),
            "mode": self.mode,
            "feature_tag": self.feature_tag,
            "seed": self.seed,
            "num_utterances": self.num_utterances,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self):
        width = max(6, max(len(a) for a in self.accents))
        lines = [
            "mode: %s    feature: %s    utterances: %d" % (self.mode, self.feature_tag,
                                                           self.num_utterances),
            "overall accuracy: %.4f" % self.accuracy,
            "",
            "%-*s  %8s    confusion (rows = truth)" % (width, "accent", "acc"),
        ]
        for i, accent in enumerate(self.accents):
            row = " ".join("%5d" % v for v in self.confusion[i])
            lines.append("%-*s  %8.4f    %s" % (width, accent, self.per_accent[accent], row))
        return "\n".join(lines) + "\n"


def evaluate(model_set, test_corpus, mode="baseline", max_frames=None,
             normalize_per_frame=False, feature_tag="", seed=None):
    """Accuracy, per-accent accuracy, and confusion over labeled utterances.

    test_corpus items are (payload, accent) pairs; the payload is a
    FeatureMatrix in baseline mode and a pooled vowel map in vowel mode.
    """
    accent_index = {a: i for i, a in enumerate(model_set.accents)}
    confusion = np.zeros((len(model_set.accents),) * 2, dtype=np.int64)
    for payload, accent in test_corpus:
        if accent not in accent_index:
            raise ValueError("unknown accent label %r in corpus" % accent)
        if mode == "baseline":
            result = classify_baseline(model_set, payload, max_frames=max_frames)
        elif mode == "vowel":
            result = classify_vowel_weighted(model_set, payload,
                                             normalize_per_frame=normalize_per_frame)
        else:
            raise ValueError("unknown mode %r" % mode)
        confusion[accent_index[accent], accent_index[result.chosen_accent]] += 1
    row_totals = confusion.sum(axis=1)
    if np.any(row_totals == 0):
        missing = [a for a, i in accent_index.items() if row_totals[i] == 0]
        raise ValueError("no test utterances for accents: %s" % ", ".join(map(str, missing)))
    per_accent = {
        accent: float(confusion[i, i] / row_totals[i])
        for accent, i in accent_index.items()
    }
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalReport(
        accuracy=accuracy,
        per_accent=per_accent,
        confusion=confusion,
        accents=list(model_set.accents),
        mode=mode,
        feature_tag=feature_tag,
        seed=seed,
        num_utterances=int(confusion.sum()),
    )
