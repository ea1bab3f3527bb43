"""End-to-end orchestration: manifests, config, synthetic corpora, stages.

A workspace directory holds everything a run produces:

    manifest.tsv                 corpus entries (+ split column)
    corpus/                      synthetic feature archives / label files
    features/vad|feat|reduced/   per-utterance stage artifacts
    models/                      transforms, UBM, accent + vowel models, weights
    reports/                     predictions, evaluation, provenance

Stages are idempotent: re-running one with unchanged inputs rewrites
byte-identical artifacts, and every stage records a provenance document
with its config hash and input/output hashes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import signal as sig
from .adapt import AdaptConfig, adapt_all_accents, map_adapt
from .classify import (
    AccentModelSet,
    EvalReport,
    classify_baseline,
    classify_vowel_weighted,
    pairwise_vowel_distances,
    vowel_discriminativeness,
    vowel_weights,
)
from .errors import ConfigError, MissingPrerequisiteError
from .frontend import (
    FeatureMatrix,
    FrontendConfig,
    append_deltas,
    feature_warp,
    mvn,
    plp_static,
    read_feature_archive,
    write_feature_archive,
)
from .gmm import em_train, read_model, write_model
from .transforms import (
    apply_chain,
    apply_transform,
    fit_hlda,
    fit_pca,
    write_transform_chain,
)
from .vowels import (
    ARPABET_VOWELS,
    NUM_VOWELS,
    PhoneSegment,
    calibrate_threshold,
    filter_by_confidence,
    parse_label_file,
    pool_vowel_features,
    vowel_popularity,
    write_label_file,
)

STAGES = (
    "vad",
    "features",
    "transforms",
    "ubm",
    "adapt",
    "vowel-models",
    "weights",
    "classify",
    "evaluate",
    "calibrate",
)

# vowels ordered by typical corpus frequency; drives the default popularity
_DEFAULT_FREQUENCY_ORDER = (
    "ah", "ih", "iy", "eh", "ae", "aa", "er", "ey",
    "ow", "uw", "ay", "ao", "aw", "uh", "oy",
)


# ---------------------------------------------------------------------------
# corpus manifest


@dataclass
class ManifestEntry:
    audio: str
    label: str | None
    accent: str
    split: str | None = None


@dataclass
class CorpusManifest:
    entries: list
    base_dir: Path
    seed: int | None = None

    def resolve(self, raw):
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def accents(self):
        seen = []
        for entry in self.entries:
            if entry.accent not in seen:
                seen.append(entry.accent)
        return seen

    def with_split(self, split):
        return [(i, e) for i, e in enumerate(self.entries) if e.split == split]

    def save(self, path):
        path = Path(path)
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self.entries:
                cols = [entry.audio, entry.label or "-", entry.accent]
                if entry.split is not None:
                    cols.append(entry.split)
                handle.write("\t".join(cols) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        entries = []
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                cols = line.rstrip("\n").split("\t")
                if len(cols) not in (3, 4):
                    raise ConfigError(
                        "%s:%d: manifest lines need 3 or 4 tab-separated columns"
                        % (path, lineno)
                    )
                label = None if cols[1] in ("-", "") else cols[1]
                split = cols[3] if len(cols) == 4 else None
                if split is not None and split not in ("train", "dev", "test"):
                    raise ConfigError("%s:%d: unknown split %r" % (path, lineno, split))
                entries.append(ManifestEntry(cols[0], label, cols[2], split))
        return cls(entries=entries, base_dir=path.parent)


def split_corpus(manifest, seed):
    """Stratified 70:15:15 split per accent (shuffle governed by the seed)."""
    rng = np.random.default_rng(seed)
    entries = [replace(e) for e in manifest.entries]
    for accent in manifest.accents():
        idx = [i for i, e in enumerate(entries) if e.accent == accent]
        n = len(idx)
        if n < 7:
            raise ValueError(
                "accent %r has %d utterances; at least 7 are needed to split" % (accent, n)
            )
        n_train = int(n * 0.70 + 0.5)
        n_dev = int(n * 0.15 + 0.5)
        for pos, which in enumerate(rng.permutation(n)):
            if pos < n_train:
                entries[idx[which]].split = "train"
            elif pos < n_train + n_dev:
                entries[idx[which]].split = "dev"
            else:
                entries[idx[which]].split = "test"
    return CorpusManifest(entries=entries, base_dir=manifest.base_dir, seed=seed)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class SignalConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    energy_weight: float = 5.0
    centroid_weight: float = 2.0
    min_segment_frames: int = 5


@dataclass
class TransformsConfig:
    enabled: bool = True
    pca_dim: int = 30
    hlda_dim: int = 20
    context: int = 1
    max_iters: int = 100
    tol: float = 1e-6


@dataclass
class UbmConfig:
    components: int = 256
    em_iters: int = 5
    final_em_iters: int = 10


@dataclass
class VowelModelConfig:
    components: int = 32
    min_frames: int = 200
    confidence_threshold: float = float("-inf")
    use_calibrated_threshold: bool = False


@dataclass
class WeightsConfig:
    mode: str = "mean_distance"
    hellinger_samples: int = 50000
    hellinger_seed: int = 77


@dataclass
class CalibrateConfig:
    grid: tuple = (float("-inf"), -80.0, -70.0, -60.0, -50.0, -40.0, -30.0, -20.0)


@dataclass
class CorpusConfig:
    seed: int = 12345
    max_test_frames: int = 2000


@dataclass
class SyntheticSpec:
    """Generator for a desk-scale corpus of per-accent, per-vowel mixtures."""

    num_accents: int = 7
    feature_dim: int = 5
    utterances_per_accent: int = 30
    frames_per_utterance: int = 300
    segment_frames_min: int = 10
    segment_frames_max: int = 30
    vowel_popularity: tuple = ()
    accent_separation: float = 3.0
    discriminative_vowels: tuple = ()
    nonvowel_fraction: float = 0.15
    noise_segment_fraction: float = 0.0
    noise_splits: tuple = ("dev", "test")
    with_confidence: bool = False
    clean_confidence_mean: float = -20.0
    clean_confidence_std: float = 3.0
    noise_confidence_mean: float = -80.0
    noise_confidence_std: float = 3.0
    noise_floor: float = 0.05
    frame_hop_sec: float = 0.01
    seed: int = 4242

    def popularity(self):
        if self.vowel_popularity:
            profile = np.asarray(self.vowel_popularity, dtype=np.float64)
            if profile.shape != (NUM_VOWELS,):
                raise ConfigError("vowel popularity needs %d entries" % NUM_VOWELS)
            if np.any(profile < 0) or profile.sum() <= 0:
                raise ConfigError("vowel popularity must be non-negative and sum > 0")
            return profile / profile.sum()
        ranked = 0.82 ** np.arange(NUM_VOWELS)
        profile = np.zeros(NUM_VOWELS)
        for rank, vowel in enumerate(_DEFAULT_FREQUENCY_ORDER):
            profile[ARPABET_VOWELS.index(vowel)] = ranked[rank]
        return profile / profile.sum()


@dataclass
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    transforms: TransformsConfig = field(default_factory=TransformsConfig)
    ubm: UbmConfig = field(default_factory=UbmConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    vowels: VowelModelConfig = field(default_factory=VowelModelConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def validate(self):
        static_dim = 3 * self.frontend.num_ceps
        t = self.transforms
        if t.enabled:
            if t.pca_dim > static_dim:
                raise ConfigError(
                    "dimension chain broken: PCA dim %d exceeds frontend dim %d"
                    % (t.pca_dim, static_dim)
                )
            spliced = t.pca_dim * (2 * t.context + 1)
            if t.hlda_dim > spliced:
                raise ConfigError(
                    "dimension chain broken: HLDA dim %d exceeds spliced dim %d"
                    % (t.hlda_dim, spliced)
                )
            if t.context < 0:
                raise ConfigError("context must be non-negative")
        for name, count in (("ubm", self.ubm.components), ("vowels", self.vowels.components)):
            if count < 1 or count & (count - 1):
                raise ConfigError("%s.components must be a power of 2, got %d" % (name, count))
        if self.weights.mode not in ("mean_distance", "reciprocal_mean"):
            raise ConfigError("weights.mode must be mean_distance or reciprocal_mean")
        if self.synth.vowel_popularity:
            self.synth.popularity()
        return self

    def hop_sec(self):
        return self.signal.hop_ms / 1000.0

    def feature_tag(self, direct_dim=None):
        if self.transforms.enabled:
            return "PCA/HLDA_C%d_%d" % (self.transforms.context, self.transforms.hlda_dim)
        if direct_dim is not None:
            return "DIRECT_%d" % direct_dim
        return "PLP_MVN_%d" % (3 * self.frontend.num_ceps)


# flat dotted-key <-> dataclass field registry: (key, section, attr, kind)
_CONFIG_KEYS = (
    ("corpus.seed", "corpus", "seed", "int"),
    ("corpus.max_test_frames", "corpus", "max_test_frames", "int"),
    ("signal.frame_ms", "signal", "frame_ms", "float"),
    ("signal.hop_ms", "signal", "hop_ms", "float"),
    ("signal.energy_weight", "signal", "energy_weight", "float"),
    ("signal.centroid_weight", "signal", "centroid_weight", "float"),
    ("signal.min_segment_frames", "signal", "min_segment_frames", "int"),
    ("frontend.lp_order", "frontend", "lp_order", "int"),
    ("frontend.num_ceps", "frontend", "num_ceps", "int"),
    ("frontend.num_filters", "frontend", "num_filters", "int"),
    ("frontend.delta_window", "frontend", "delta_window", "int"),
    ("frontend.warp_window", "frontend", "warp_window_frames", "int"),
    ("frontend.mvn_before_warp", "frontend", "mvn_before_warp", "bool"),
    ("transforms.enabled", "transforms", "enabled", "bool"),
    ("transforms.pca_dim", "transforms", "pca_dim", "int"),
    ("transforms.hlda_dim", "transforms", "hlda_dim", "int"),
    ("transforms.context", "transforms", "context", "int"),
    ("transforms.max_iters", "transforms", "max_iters", "int"),
    ("transforms.tol", "transforms", "tol", "float"),
    ("ubm.components", "ubm", "components", "int"),
    ("ubm.em_iters", "ubm", "em_iters", "int"),
    ("ubm.final_em_iters", "ubm", "final_em_iters", "int"),
    ("adapt.relevance_weight", "adapt", "relevance_weight", "float"),
    ("adapt.relevance_mean", "adapt", "relevance_mean", "float"),
    ("adapt.relevance_var", "adapt", "relevance_var", "float"),
    ("adapt.weights", "adapt", "adapt_weights", "bool"),
    ("adapt.means", "adapt", "adapt_means", "bool"),
    ("adapt.vars", "adapt", "adapt_vars", "bool"),
    ("vowels.components", "vowels", "components", "int"),
    ("vowels.min_frames", "vowels", "min_frames", "int"),
    ("vowels.confidence_threshold", "vowels", "confidence_threshold", "float"),
    ("vowels.use_calibrated_threshold", "vowels", "use_calibrated_threshold", "bool"),
    ("weights.mode", "weights", "mode", "str"),
    ("weights.hellinger_samples", "weights", "hellinger_samples", "int"),
    ("weights.hellinger_seed", "weights", "hellinger_seed", "int"),
    ("calibrate.grid", "calibrate", "grid", "floats"),
    ("synth.num_accents", "synth", "num_accents", "int"),
    ("synth.feature_dim", "synth", "feature_dim", "int"),
    ("synth.utterances_per_accent", "synth", "utterances_per_accent", "int"),
    ("synth.frames_per_utterance", "synth", "frames_per_utterance", "int"),
    ("synth.segment_frames_min", "synth", "segment_frames_min", "int"),
    ("synth.segment_frames_max", "synth", "segment_frames_max", "int"),
    ("synth.vowel_popularity", "synth", "vowel_popularity", "floats"),
    ("synth.accent_separation", "synth", "accent_separation", "float"),
    ("synth.discriminative_vowels", "synth", "discriminative_vowels", "strs"),
    ("synth.nonvowel_fraction", "synth", "nonvowel_fraction", "float"),
    ("synth.noise_segment_fraction", "synth", "noise_segment_fraction", "float"),
    ("synth.noise_splits", "synth", "noise_splits", "strs"),
    ("synth.with_confidence", "synth", "with_confidence", "bool"),
    ("synth.clean_confidence_mean", "synth", "clean_confidence_mean", "float"),
    ("synth.clean_confidence_std", "synth", "clean_confidence_std", "float"),
    ("synth.noise_confidence_mean", "synth", "noise_confidence_mean", "float"),
    ("synth.noise_confidence_std", "synth", "noise_confidence_std", "float"),
    ("synth.noise_floor", "synth", "noise_floor", "float"),
    ("synth.seed", "synth", "seed", "int"),
)


def _format_value(value, kind):
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("floats", "strs"):
        return ",".join(_format_value(v, kind[:-1]) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def _parse_value(text, kind, key):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind == "floats":
            return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()
        if kind == "strs":
            return tuple(v.strip() for v in text.split(",") if v.strip()) if text else ()
        return text
    except ValueError as exc:
        raise ConfigError("cannot parse %s value %r as %s" % (key, text, kind)) from exc


def config_to_text(cfg):
    lines = ["# accent-forge pipeline configuration"]
    section = None
    for key, sec, attr, kind in _CONFIG_KEYS:
        if sec != section:
            lines.append("")
            section = sec
        lines.append("%s = %s" % (key, _format_value(getattr(getattr(cfg, sec), attr), kind)))
    return "\n".join(lines) + "\n"


def config_from_text(text):
    cfg = PipelineConfig()
    table = {key: (sec, attr, kind) for key, sec, attr, kind in _CONFIG_KEYS}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("line %d: expected 'key = value', got %r" % (lineno, line))
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in table:
            raise ConfigError("line %d: unknown config key %r" % (lineno, key))
        sec, attr, kind = table[key]
        setattr(getattr(cfg, sec), attr, _parse_value(value, kind, key))
    return cfg.validate()


def load_config(path=None):
    if path is None:
        return PipelineConfig().validate()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    return config_from_text(text)


# ---------------------------------------------------------------------------
# synthetic corpus


def generate_synthetic_corpus(spec, out_dir):
    """Emit per-utterance feature archives, label files, and a split manifest.

    Accent identity lives in per-vowel mean offsets (only for the configured
    discriminative vowels, or all of them when unset). Noise segments mimic
    recognition errors: their frames come from a wrong accent's distribution
    and they carry low confidence scores. Ground-truth generator parameters
    go to truth.json for oracle checks. Fully deterministic per seed.
    """
    out_dir = Path(out_dir)
    (out_dir / "corpus").mkdir(parents=True, exist_ok=True)
    if spec.segment_frames_min < 1 or spec.segment_frames_max < spec.segment_frames_min:
        raise ConfigError("invalid segment frame bounds")
    if spec.num_accents < 2:
        raise ConfigError("need at least 2 accents")
    popularity = spec.popularity()
    dim = spec.feature_dim
    accents = ["accent%d" % (i + 1) for i in range(spec.num_accents)]

    seed_seq = np.random.SeedSequence(spec.seed)
    children = seed_seq.spawn(spec.num_accents * spec.utterances_per_accent + 1)
    rng = np.random.default_rng(children[0])

    base_means = rng.normal(0.0, 2.0, size=(NUM_VOWELS, dim))
    consonant_mean = rng.normal(0.0, 2.0, size=dim)
    if spec.discriminative_vowels:
        disc = np.zeros(NUM_VOWELS, dtype=bool)
        for vowel in spec.discriminative_vowels:
            if vowel not in ARPABET_VOWELS:
                raise ConfigError("unknown vowel %r in discriminative set" % vowel)
            disc[ARPABET_VOWELS.index(vowel)] = True
    else:
        disc = np.ones(NUM_VOWELS, dtype=bool)
    offsets = np.zeros((spec.num_accents, NUM_VOWELS, dim))
    for s in range(spec.num_accents):
        for t in range(NUM_VOWELS):
            if disc[t]:
                direction = rng.normal(size=dim)
                direction /= np.linalg.norm(direction)
                offsets[s, t] = spec.accent_separation * direction

    entries = []
    for accent in accents:
        for j in range(spec.utterances_per_accent):
            stem = "%s_%04d" % (accent, j)
            entries.append(
                ManifestEntry("corpus/%s.aff" % stem, "corpus/%s.lab" % stem, accent)
            )
    manifest = split_corpus(
        CorpusManifest(entries=entries, base_dir=out_dir), seed=spec.seed
    )

    hop = spec.frame_hop_sec
    for index, entry in enumerate(manifest.entries):
        utt_rng = np.random.default_rng(children[index + 1])
        accent_idx = accents.index(entry.accent)
        noisy_split = (
            spec.noise_segment_fraction > 0 and entry.split in spec.noise_splits
        )
        rows = []
        tags = []
        segments = []
        frame_cursor = 0
        while frame_cursor < spec.frames_per_utterance:
            length = int(utt_rng.integers(spec.segment_frames_min,
                                          spec.segment_frames_max + 1))
            length = min(length, spec.frames_per_utterance - frame_cursor)
            draw = utt_rng.random()
            is_noise = noisy_split and draw < spec.noise_segment_fraction
            is_filler = (not is_noise) and utt_rng.random() < spec.nonvowel_fraction
            if is_filler:
                mean = consonant_mean
                label = "sil"
                tag = 0
                confidence = None
                if spec.with_confidence:
                    confidence = float(utt_rng.normal(spec.clean_confidence_mean,
                                                      spec.clean_confidence_std))
            else:
                vowel_idx = int(utt_rng.choice(NUM_VOWELS, p=popularity))
                label = ARPABET_VOWELS[vowel_idx]
                tag = vowel_idx + 1
                if is_noise:
                    wrong = int(utt_rng.integers(spec.num_accents - 1))
                    if wrong >= accent_idx:
                        wrong += 1
                    mean = base_means[vowel_idx] + offsets[wrong, vowel_idx]
                    confidence = float(utt_rng.normal(spec.noise_confidence_mean,
                                                      spec.noise_confidence_std))
                else:
                    mean = base_means[vowel_idx] + offsets[accent_idx, vowel_idx]
                    confidence = None
                    if spec.with_confidence:
                        confidence = float(utt_rng.normal(spec.clean_confidence_mean,
                                                          spec.clean_confidence_std))
            chunk = mean + utt_rng.standard_normal((length, dim))
            if spec.noise_floor > 0:
                chunk = chunk + spec.noise_floor * utt_rng.standard_normal((length, dim))
            rows.append(chunk)
            tags.extend([tag] * length)
            segments.append(
                PhoneSegment(
                    start_sec=frame_cursor * hop,
                    end_sec=(frame_cursor + length) * hop,
                    label=label,
                    confidence=confidence,
                )
            )
            frame_cursor += length
        feats = FeatureMatrix(np.vstack(rows), hop, np.asarray(tags, dtype=np.uint8))
        write_feature_archive(manifest.resolve(entry.audio), feats)
        write_label_file(manifest.resolve(entry.label), segments)

    manifest.save(out_dir / "manifest.tsv")
    truth = {
        "accents": accents,
        "base_means": base_means.tolist(),
        "offsets": offsets.tolist(),
        "consonant_mean": consonant_mean.tolist(),
        "popularity": popularity.tolist(),
        "discriminative": [ARPABET_VOWELS[i] for i in np.nonzero(disc)[0]],
        "spec": {f.name: _jsonable(getattr(spec, f.name)) for f in dataclasses.fields(spec)},
    }
    (out_dir / "truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def synthesize_tone_silence(
    duration_sec=8.0,
    speech_fraction=0.85,
    sample_rate_hz=16000,
    num_bursts=5,
    tone_hz=None,
    burst_amp=0.3,
    noise_amp=1e-4,
    seed=0,
):
    """Tone bursts over a tiny noise floor, with known burst boundaries.

    The tone sits at 0.35 * fs, well above the white-noise spectral
    centroid, so both VAD criteria agree on the bursts. Returns the
    AudioBuffer and the ground-truth (start_sample, end_sample) list.
    """
    rng = np.random.default_rng(seed)
    total = int(round(duration_sec * sample_rate_hz))
    if tone_hz is None:
        tone_hz = 0.35 * sample_rate_hz
    samples = noise_amp * rng.standard_normal(total)
    speech_total = int(round(total * speech_fraction))
    silence_total = total - speech_total
    gap_weights = rng.uniform(0.6, 1.4, size=num_bursts + 1)
    gaps = np.floor(silence_total * gap_weights / gap_weights.sum()).astype(int)
    burst_weights = rng.uniform(0.6, 1.4, size=num_bursts)
    bursts = np.floor(speech_total * burst_weights / burst_weights.sum()).astype(int)
    bursts[-1] += speech_total - bursts.sum()

    truth = []
    cursor = 0
    t_index = np.arange(total)
    for i in range(num_bursts):
        cursor += gaps[i]
        start = cursor
        end = min(start + bursts[i], total)
        phase = 2.0 * np.pi * tone_hz / sample_rate_hz
        samples[start:end] += burst_amp * np.sin(phase * t_index[start:end])
        truth.append((int(start), int(end)))
        cursor = end
    return sig.AudioBuffer(samples, sample_rate_hz), truth


# ---------------------------------------------------------------------------
# workspace and provenance


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    @property
    def manifest_path(self):
        return self.root / "manifest.tsv"

    def dir(self, name):
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def utt_id(self, index, entry):
        return "%05d_%s" % (index, Path(entry.audio).stem)


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _relname(ws, path):
    try:
        return str(Path(path).relative_to(ws.root))
    except ValueError:
        return str(path)


def _write_provenance(ws, stage, cfg, inputs, outputs):
    doc = {
        "stage": stage,
        "config_sha256": hashlib.sha256(config_to_text(cfg).encode()).hexdigest(),
        "inputs": {_relname(ws, p): _sha256(p) for p in sorted(set(map(str, inputs)))},
        "outputs": {_relname(ws, p): _sha256(p) for p in sorted(set(map(str, outputs)))},
    }
    out = ws.dir("reports/provenance") / ("%s.json" % stage)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(path, stage):
    if not Path(path).exists():
        raise MissingPrerequisiteError(
            "missing %s; run stage '%s' first" % (path, stage)
        )
    return Path(path)


def _load_manifest(ws, need_split=False):
    _require(ws.manifest_path, "split (or synth)")
    manifest = CorpusManifest.load(ws.manifest_path)
    if need_split and any(e.split is None for e in manifest.entries):
        raise MissingPrerequisiteError(
            "manifest %s has no split column; run 'split' first" % ws.manifest_path
        )
    return manifest


# ---------------------------------------------------------------------------
# stages


def _frame_plan(cfg, sample_rate_hz):
    return sig.FramePlan.from_ms(sample_rate_hz, cfg.signal.frame_ms, cfg.signal.hop_ms)


def stage_vad(cfg, ws):
    """Silence removal for audio entries; duration bookkeeping for all."""
    manifest = _load_manifest(ws)
    vad_dir = ws.dir("features/vad")
    inputs = [ws.manifest_path]
    outputs = []
    for index, entry in enumerate(manifest.entries):
        utt = ws.utt_id(index, entry)
        src = manifest.resolve(entry.audio)
        _require(src, "synth (corpus file missing)")
        inputs.append(src)
        meta_path = vad_dir / (utt + ".json")
        if src.suffix == ".aff":
            feats = read_feature_archive(src)
            duration = feats.num_frames * feats.frame_hop_sec
            meta = {
                "kind": "features",
                "frames": feats.num_frames,
                "segments_frames": [[0, feats.num_frames]],
                "duration_before_sec": duration,
                "duration_after_sec": duration,
                "compression_ratio": 1.0,
            }
        else:
            audio = sig.read_wav(src)
            plan = _frame_plan(cfg, audio.sample_rate_hz)
            vad = sig.remove_silence(
                audio,
                plan,
                energy_weight=cfg.signal.energy_weight,
                centroid_weight=cfg.signal.centroid_weight,
                min_segment_frames=cfg.signal.min_segment_frames,
            )
            seg_path = vad_dir / (utt + ".seg")
            seg_path.write_text(
                sig.segments_to_text(vad.segments, plan, audio.sample_rate_hz),
                encoding="utf-8",
            )
            outputs.append(seg_path)
            retained = sum(
                (e - 1 - s) * plan.hop_samples + plan.frame_len_samples
                for s, e in vad.segments
            )
            meta = {
                "kind": "audio",
                "sample_rate_hz": audio.sample_rate_hz,
                "frames": int(len(vad.speech_mask)),
                "segments_frames": [[int(s), int(e)] for s, e in vad.segments],
                "duration_before_sec": audio.duration_sec,
                "duration_after_sec": retained / audio.sample_rate_hz,
                "compression_ratio": vad.compression_ratio,
                "energy_threshold": vad.energy_threshold,
                "centroid_threshold": vad.centroid_threshold,
            }
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
        outputs.append(meta_path)
    _write_provenance(ws, "vad", cfg, inputs, outputs)


def _vowel_index_at(segments, time_sec):
    for seg in segments:
        if seg.is_vowel and seg.start_sec <= time_sec < seg.end_sec:
            return ARPABET_VOWELS.index(seg.label) + 1
    return 0


def _segment_at(segments, time_sec):
    for i, seg in enumerate(segments):
        if seg.start_sec <= time_sec < seg.end_sec:
            return i
    return -1


def stage_features(cfg, ws):
    """Frontend features per utterance (audio), or verbatim copy (archives).

    Audio entries are framed per VAD segment (windows never straddle a
    removed gap); each retained frame is tagged with its vowel by
    original-time membership, and a label file remapped onto the trimmed
    timeline is written next to the archive.
    """
    manifest = _load_manifest(ws)
    vad_dir = ws.dir("features/vad")
    feat_dir = ws.dir("features/feat")
    inputs = [ws.manifest_path]
    outputs = []
    for index, entry in enumerate(manifest.entries):
        utt = ws.utt_id(index, entry)
        src = manifest.resolve(entry.audio)
        meta_path = _require(vad_dir / (utt + ".json"), "vad")
        inputs.extend([src, meta_path])
        out_aff = feat_dir / (utt + ".aff")
        out_lab = feat_dir / (utt + ".lab")
        if src.suffix == ".aff":
            read_feature_archive(src)  # validates magic and shape
            shutil.copyfile(src, out_aff)
            outputs.append(out_aff)
            if entry.label:
                lab_src = manifest.resolve(entry.label)
                inputs.append(lab_src)
                shutil.copyfile(lab_src, out_lab)
                outputs.append(out_lab)
            continue

        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        audio = sig.read_wav(src)
        plan = _frame_plan(cfg, audio.sample_rate_hz)
        hop_sec = plan.hop_samples / audio.sample_rate_hz
        label_segments = None
        if entry.label:
            lab_src = manifest.resolve(entry.label)
            inputs.append(lab_src)
            label_segments = parse_label_file(lab_src)

        frame_blocks = []
        centers_sec = []
        for start_f, end_f in meta["segments_frames"]:
            s0 = start_f * plan.hop_samples
            s1 = (end_f - 1) * plan.hop_samples + plan.frame_len_samples
            block = sig.frame_signal(audio.samples[s0:min(s1, len(audio.samples))], plan)
            frame_blocks.append(block)
            starts = s0 + plan.hop_samples * np.arange(block.shape[0])
            centers_sec.extend(((starts + plan.frame_len_samples / 2)
                                / audio.sample_rate_hz).tolist())
        if not frame_blocks:
            raise ValueError("utterance %s has no speech frames after VAD" % utt)
        frames = np.vstack(frame_blocks)
        min_frames = max(2 * cfg.frontend.delta_window + 1, 2)
        if frames.shape[0] < min_frames:
            raise ValueError(
                "utterance %s has %d speech frames; need at least %d"
                % (utt, frames.shape[0], min_frames)
            )

        feats = plp_static(frames, audio.sample_rate_hz, cfg.frontend, hop_sec)
        feats = append_deltas(feats, cfg.frontend.delta_window)
        if cfg.frontend.mvn_before_warp:
            feats, _ = mvn(feats)
            feats = feature_warp(feats, cfg.frontend.warp_window_frames)
        else:
            feats = feature_warp(feats, cfg.frontend.warp_window_frames)
            feats, _ = mvn(feats)

        if label_segments is not None:
            tags = np.array(
                [_vowel_index_at(label_segments, t) for t in centers_sec], dtype=np.uint8
            )
            feats = FeatureMatrix(feats.data, feats.frame_hop_sec, tags)
            remapped = []
            assignment = [_segment_at(label_segments, t) for t in centers_sec]
            run_start = 0
            for k in range(1, len(assignment) + 1):
                if k == len(assignment) or assignment[k] != assignment[run_start]:
                    seg_idx = assignment[run_start]
                    if seg_idx >= 0:
                        source = label_segments[seg_idx]
                        remapped.append(
                            PhoneSegment(
                                start_sec=run_start * hop_sec,
                                end_sec=k * hop_sec,
                                label=source.label,
                                confidence=source.confidence,
                            )
                        )
                    run_start = k
            write_label_file(out_lab, remapped)
            outputs.append(out_lab)
        write_feature_archive(out_aff, feats)
        outputs.append(out_aff)
    _write_provenance(ws, "features", cfg, inputs, outputs)


def _feature_source_dir(cfg, ws):
    return ws.dir("features/reduced" if cfg.transforms.enabled else "features/feat")


def _load_features(cfg, ws, manifest, index, entry, reduced=True):
    base = _feature_source_dir(cfg, ws) if reduced else ws.dir("features/feat")
    stage = "transforms" if (reduced and cfg.transforms.enabled) else "features"
    path = _require(base / (ws.utt_id(index, entry) + ".aff"), stage)
    return read_feature_archive(path), path


def _load_labels(ws, index, entry):
    lab = ws.dir("features/feat") / (ws.utt_id(index, entry) + ".lab")
    if not lab.exists():
        return None, None
    return parse_label_file(lab), lab


def stage_transforms(cfg, ws):
    """Fit PCA then HLDA on the train split; write reduced archives for all."""
    if not cfg.transforms.enabled:
        _write_provenance(ws, "transforms", cfg, [], [])
        return
    manifest = _load_manifest(ws, need_split=True)
    accents = manifest.accents()
    inputs = [ws.manifest_path]
    train_feats = []
    train_labels = []
    for index, entry in manifest.with_split("train"):
        feats, path = _load_features(cfg, ws, manifest, index, entry, reduced=False)
        inputs.append(path)
        train_feats.append(feats)
        train_labels.append(accents.index(entry.accent))
    if not train_feats:
        raise MissingPrerequisiteError("no train utterances; run 'split' first")

    stacked = np.vstack([f.data for f in train_feats])
    pca = fit_pca(stacked, cfg.transforms.pca_dim)
    projected = [apply_transform(pca, f) for f in train_feats]
    hlda = fit_hlda(
        projected,
        [np.full(p.num_frames, lab) for p, lab in zip(projected, train_labels)],
        retained_dim=cfg.transforms.hlda_dim,
        context=cfg.transforms.context,
        max_iters=cfg.transforms.max_iters,
        tol=cfg.transforms.tol,
    )
    chain_path = ws.dir("models") / "transforms.aft"
    write_transform_chain(chain_path, [pca, hlda])
    outputs = [chain_path]

    reduced_dir = ws.dir("features/reduced")
    for index, entry in enumerate(manifest.entries):
        feats, path = _load_features(cfg, ws, manifest, index, entry, reduced=False)
        if path not in inputs:
            inputs.append(path)
        reduced = apply_chain([pca, hlda], feats)
        out = reduced_dir / (ws.utt_id(index, entry) + ".aff")
        write_feature_archive(out, reduced)
        outputs.append(out)
    _write_provenance(ws, "transforms", cfg, inputs, outputs)


def stage_ubm(cfg, ws):
    """EM-train the universal background model on the pooled train split."""
    manifest = _load_manifest(ws, need_split=True)
    inputs = [ws.manifest_path]
    blocks = []
    for index, entry in manifest.with_split("train"):
        feats, path = _load_features(cfg, ws, manifest, index, entry)
        inputs.append(path)
        blocks.append(feats.data)
    if not blocks:
        raise MissingPrerequisiteError("no train utterances; run 'split' first")
    data = np.vstack(blocks)
    model = em_train(
        data,
        cfg.ubm.components,
        em_iters_per_stage=cfg.ubm.em_iters,
        seed=cfg.corpus.seed,
        final_em_iters=cfg.ubm.final_em_iters,
        label="ubm",
    )
    out = ws.dir("models") / "ubm.agm"
    write_model(out, model)
    _write_provenance(ws, "ubm", cfg, inputs, [out])


def stage_adapt(cfg, ws):
    """MAP-adapt one model per accent from the UBM."""
    manifest = _load_manifest(ws, need_split=True)
    ubm_path = _require(ws.dir("models") / "ubm.agm", "ubm")
    ubm = read_model(ubm_path)
    inputs = [ws.manifest_path, ubm_path]
    accents = manifest.accents()
    per_accent = {}
    for index, entry in manifest.with_split("train"):
        feats, path = _load_features(cfg, ws, manifest, index, entry)
        inputs.append(path)
        per_accent.setdefault(entry.accent, []).append(feats.data)
    pooled = {a: np.vstack(per_accent[a]) for a in accents if a in per_accent}
    models = adapt_all_accents(ubm, pooled, cfg.adapt)
    accents_dir = ws.dir("models/accents")
    outputs = []
    for accent in accents:
        out = accents_dir / (accent + ".agm")
        write_model(out, models[accent])
        outputs.append(out)
    set_path = ws.dir("models") / "accent_set.json"
    set_path.write_text(
        json.dumps({"accents": accents, "dim": ubm.dim,
                    "components": ubm.num_components}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    outputs.append(set_path)
    _write_provenance(ws, "adapt", cfg, inputs, outputs)


def _pool_training_vowels(cfg, ws, manifest, inputs):
    """vowel -> accent -> list of frame blocks, from the train split."""
    pooled = {v: {} for v in ARPABET_VOWELS}
    counts = {v: 0 for v in ARPABET_VOWELS}
    for index, entry in manifest.with_split("train"):
        feats, path = _load_features(cfg, ws, manifest, index, entry)
        inputs.append(path)
        segments, lab_path = _load_labels(ws, index, entry)
        if segments is None:
            continue
        inputs.append(lab_path)
        by_vowel = pool_vowel_features(feats, segments)
        for vowel, mat in by_vowel.items():
            if mat.num_frames == 0:
                continue
            pooled[vowel].setdefault(entry.accent, []).append(mat.data)
            counts[vowel] += mat.num_frames
    return pooled, counts


def stage_vowel_models(cfg, ws):
    """Per-vowel UBMs (pooled accents) adapted into the vowel/accent grid."""
    manifest = _load_manifest(ws, need_split=True)
    accents = manifest.accents()
    inputs = [ws.manifest_path]
    pooled, counts = _pool_training_vowels(cfg, ws, manifest, inputs)
    vowel_dir = ws.dir("models/vowels")
    outputs = []
    included = []
    for vowel in ARPABET_VOWELS:
        blocks = pooled[vowel]
        total = counts[vowel]
        if total < max(cfg.vowels.min_frames, 2 * cfg.vowels.components):
            continue
        all_frames = np.vstack([b for group in blocks.values() for b in group])
        vowel_ubm = em_train(
            all_frames,
            cfg.vowels.components,
            em_iters_per_stage=cfg.ubm.em_iters,
            seed=cfg.corpus.seed,
            final_em_iters=cfg.ubm.final_em_iters,
            label="ubm.%s" % vowel,
        )
        ubm_out = vowel_dir / ("%s.ubm.agm" % vowel)
        write_model(ubm_out, vowel_ubm)
        outputs.append(ubm_out)
        for accent in accents:
            if accent in blocks:
                model = map_adapt(vowel_ubm, np.vstack(blocks[accent]), cfg.adapt)
                model.label = "%s.%s" % (accent, vowel)
            else:
                model = read_model(ubm_out)
                model.label = "%s.%s" % (accent, vowel)
            out = vowel_dir / ("%s.%s.agm" % (vowel, accent))
            write_model(out, model)
            outputs.append(out)
        included.append(vowel)
    set_path = ws.dir("models") / "vowel_set.json"
    set_path.write_text(
        json.dumps(
            {
                "accents": accents,
                "included_vowels": included,
                "train_frame_counts": {v: int(counts[v]) for v in ARPABET_VOWELS},
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    outputs.append(set_path)
    _write_provenance(ws, "vowel-models", cfg, inputs, outputs)


def _load_vowel_grid(ws):
    set_path = _require(ws.dir("models") / "vowel_set.json", "vowel-models")
    doc = json.loads(set_path.read_text(encoding="utf-8"))
    accents = doc["accents"]
    grid = {}
    ubms = {}
    vowel_dir = ws.dir("models/vowels")
    for vowel in doc["included_vowels"]:
        ubms[vowel] = read_model(_require(vowel_dir / ("%s.ubm.agm" % vowel),
                                          "vowel-models"))
        grid[vowel] = [
            read_model(_require(vowel_dir / ("%s.%s.agm" % (vowel, accent)),
                                "vowel-models"))
            for accent in accents
        ]
    return doc, grid, ubms


def stage_weights(cfg, ws):
    """Combine vowel popularity and Hellinger discriminativeness into weights."""
    doc, grid, _ = _load_vowel_grid(ws)
    popularity = vowel_popularity(doc["train_frame_counts"])
    distances = pairwise_vowel_distances(
        grid, num_samples=cfg.weights.hellinger_samples, seed=cfg.weights.hellinger_seed
    )
    disc = vowel_discriminativeness(grid, mode=cfg.weights.mode, distances=distances)
    weights = vowel_weights(popularity, disc)
    out = ws.dir("models") / "vowel_weights.json"
    payload = {
        "vowels": list(ARPABET_VOWELS),
        "popularity": popularity.tolist(),
        "discriminativeness": disc.tolist(),
        "weights": weights.tolist(),
        "mode": cfg.weights.mode,
        "hellinger_samples": cfg.weights.hellinger_samples,
        "hellinger_seed": cfg.weights.hellinger_seed,
        "pairwise_distances": {v: d.tolist() for v, d in distances.items()},
    }
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    set_path = ws.dir("models") / "vowel_set.json"
    _write_provenance(ws, "weights", cfg, [set_path], [out])


def load_model_set(ws, mode):
    """Assemble the AccentModelSet a classification stage needs."""
    models_dir = ws.dir("models")
    set_path = _require(models_dir / "accent_set.json", "adapt")
    accents = json.loads(set_path.read_text(encoding="utf-8"))["accents"]
    baseline = None
    grid = None
    ubms = None
    weights = None
    if mode == "baseline":
        baseline = [
            read_model(_require(models_dir / "accents" / (a + ".agm"), "adapt"))
            for a in accents
        ]
    elif mode == "vowel":
        _, grid, ubms = _load_vowel_grid(ws)
        weights_path = _require(models_dir / "vowel_weights.json", "weights")
        weights = np.asarray(
            json.loads(weights_path.read_text(encoding="utf-8"))["weights"]
        )
    else:
        raise ValueError("unknown mode %r" % mode)
    return AccentModelSet(
        accents=accents,
        baseline=baseline,
        vowel_grid=grid,
        vowel_ubms=ubms,
        vowel_weights=weights,
    )


def _clip_segments(segments, duration_sec):
    clipped = []
    for seg in segments:
        if seg.start_sec >= duration_sec - 1e-12:
            continue
        end = min(seg.end_sec, duration_sec)
        if end > seg.start_sec:
            clipped.append(PhoneSegment(seg.start_sec, end, seg.label, seg.confidence))
    return clipped


def _test_threshold(cfg, ws):
    if cfg.vowels.use_calibrated_threshold:
        path = _require(ws.dir("models") / "confidence_threshold.json", "calibrate")
        return float(json.loads(path.read_text(encoding="utf-8"))["threshold"])
    return cfg.vowels.confidence_threshold


def _pooled_for_entry(cfg, ws, manifest, index, entry, threshold):
    feats, path = _load_features(cfg, ws, manifest, index, entry)
    capped = feats.head(cfg.corpus.max_test_frames)
    segments, lab_path = _load_labels(ws, index, entry)
    if segments is None:
        raise MissingPrerequisiteError(
            "utterance %s has no label file; vowel mode needs labels"
            % ws.utt_id(index, entry)
        )
    duration = capped.num_frames * capped.frame_hop_sec
    kept = filter_by_confidence(_clip_segments(segments, duration), threshold)
    return pool_vowel_features(capped, kept), [path, lab_path]


def stage_classify(cfg, ws, mode="baseline"):
    """Write test-split predictions for the chosen mode.

    An utterance left with no vowel evidence after thresholding falls back
    to the earliest accent label (the documented tie rule).
    """
    manifest = _load_manifest(ws, need_split=True)
    model_set = load_model_set(ws, mode)
    inputs = [ws.manifest_path]
    threshold = _test_threshold(cfg, ws) if mode == "vowel" else None
    rows = []
    for index, entry in manifest.with_split("test"):
        utt = ws.utt_id(index, entry)
        if mode == "baseline":
            feats, path = _load_features(cfg, ws, manifest, index, entry)
            inputs.append(path)
            result = classify_baseline(model_set, feats,
                                       max_frames=cfg.corpus.max_test_frames)
            chosen = result.chosen_accent
            frames = result.frames_used
        else:
            pooled, paths = _pooled_for_entry(cfg, ws, manifest, index, entry, threshold)
            inputs.extend(paths)
            try:
                result = classify_vowel_weighted(model_set, pooled)
                chosen = result.chosen_accent
                frames = result.frames_used
            except ValueError:
                chosen = model_set.accents[0]
                frames = 0
        rows.append((utt, entry.accent, chosen, frames))
    if not rows:
        raise MissingPrerequisiteError("no test utterances; run 'split' first")
    out = ws.dir("reports") / ("predictions_%s.tsv" % mode)
    with open(out, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write("%s\t%s\t%s\t%d\n" % row)
    _write_provenance(ws, "classify", cfg, inputs, [out])


def stage_evaluate(cfg, ws, mode="baseline"):
    """Accuracy report (text + JSON) from the predictions file."""
    manifest = _load_manifest(ws, need_split=True)
    pred_path = _require(ws.dir("reports") / ("predictions_%s.tsv" % mode), "classify")
    set_path = _require(ws.dir("models") / "accent_set.json", "adapt")
    accents = json.loads(set_path.read_text(encoding="utf-8"))["accents"]
    index = {a: i for i, a in enumerate(accents)}
    confusion = np.zeros((len(accents), len(accents)), dtype=np.int64)
    for line in pred_path.read_text(encoding="utf-8").splitlines():
        _, truth, predicted, _ = line.split("\t")
        if truth not in index:
            raise ValueError("unknown accent label %r in corpus" % truth)
        if predicted not in index:
            raise ValueError("unknown predicted accent %r" % predicted)
        confusion[index[truth], index[predicted]] += 1
    row_totals = confusion.sum(axis=1)
    if np.any(row_totals == 0):
        raise ValueError(
            "no test utterances for accents: %s"
            % ", ".join(a for a in accents if row_totals[index[a]] == 0)
        )
    sample = manifest.entries[0] if manifest.entries else None
    direct_dim = None
    if sample is not None and Path(sample.audio).suffix == ".aff" and not cfg.transforms.enabled:
        feats, _ = _load_features(cfg, ws, manifest, 0, sample)
        direct_dim = feats.dim
    report = EvalReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_accent={a: float(confusion[i, i] / row_totals[i]) for a, i in index.items()},
        confusion=confusion,
        accents=accents,
        mode=mode,
        feature_tag=cfg.feature_tag(direct_dim),
        seed=cfg.corpus.seed,
        num_utterances=int(confusion.sum()),
    )
    json_out = ws.dir("reports") / ("evaluation_%s.json" % mode)
    text_out = ws.dir("reports") / ("evaluation_%s.txt" % mode)
    json_out.write_text(report.to_json(), encoding="utf-8")
    text_out.write_text(report.to_text(), encoding="utf-8")
    _write_provenance(ws, "evaluate", cfg, [pred_path, set_path], [json_out, text_out])
    return report


def stage_calibrate(cfg, ws):
    """Pick the confidence threshold maximizing dev accuracy (vowel mode)."""
    manifest = _load_manifest(ws, need_split=True)
    model_set = load_model_set(ws, "vowel")
    inputs = [ws.manifest_path]
    dev_items = []
    for index, entry in manifest.with_split("dev"):
        feats, path = _load_features(cfg, ws, manifest, index, entry)
        inputs.append(path)
        segments, lab_path = _load_labels(ws, index, entry)
        if segments is None:
            continue
        inputs.append(lab_path)
        capped = feats.head(cfg.corpus.max_test_frames)
        duration = capped.num_frames * capped.frame_hop_sec
        dev_items.append((capped, _clip_segments(segments, duration), entry.accent))
    if not dev_items:
        raise MissingPrerequisiteError("no dev utterances with labels; run 'split' first")

    def classify(feats, segments):
        pooled = pool_vowel_features(feats, segments)
        try:
            return classify_vowel_weighted(model_set, pooled).chosen_accent
        except ValueError:
            return None

    threshold = calibrate_threshold(dev_items, cfg.calibrate.grid, classify)
    out = ws.dir("models") / "confidence_threshold.json"
    out.write_text(
        json.dumps({"threshold": threshold, "grid": list(cfg.calibrate.grid)},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _write_provenance(ws, "calibrate", cfg, inputs, [out])
    return threshold


def run_stage(stage, cfg, ws, mode="baseline"):
    """Run one named pipeline stage inside the workspace."""
    if isinstance(ws, (str, Path)):
        ws = Workspace(ws)
    cfg.validate()
    handlers = {
        "vad": lambda: stage_vad(cfg, ws),
        "features": lambda: stage_features(cfg, ws),
        "transforms": lambda: stage_transforms(cfg, ws),
        "ubm": lambda: stage_ubm(cfg, ws),
        "adapt": lambda: stage_adapt(cfg, ws),
        "vowel-models": lambda: stage_vowel_models(cfg, ws),
        "weights": lambda: stage_weights(cfg, ws),
        "classify": lambda: stage_classify(cfg, ws, mode),
        "evaluate": lambda: stage_evaluate(cfg, ws, mode),
        "calibrate": lambda: stage_calibrate(cfg, ws),
    }
    if stage not in handlers:
        raise ConfigError("unknown stage %r (expected one of %s)" % (stage, ", ".join(STAGES)))
    return handlers[stage]()


def _format_duration(seconds):
    seconds = int(round(seconds))
    return "%d:%02d:%02d" % (seconds // 3600, (seconds % 3600) // 60, seconds % 60)


def corpus_stats(manifest, ws):
    """Per-accent utterance counts, durations before/after VAD, compression."""
    vad_dir = ws.dir("features/vad")
    rows = {}
    total_utts = len(manifest.entries)
    for index, entry in enumerate(manifest.entries):
        meta_path = _require(vad_dir / (ws.utt_id(index, entry) + ".json"), "vad")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        row = rows.setdefault(entry.accent, {"utts": 0, "dur1": 0.0, "dur2": 0.0})
        row["utts"] += 1
        row["dur1"] += meta["duration_before_sec"]
        row["dur2"] += meta["duration_after_sec"]
    header = "%-10s %8s %12s %10s %10s %14s" % (
        "Accent", "Utts", "Proportion", "Dur.1", "Dur.2", "Compression",
    )
    lines = [header, "-" * len(header)]
    sums = {"utts": 0, "dur1": 0.0, "dur2": 0.0}
    for accent in manifest.accents():
        row = rows[accent]
        ratio = 100.0 * row["dur2"] / row["dur1"] if row["dur1"] > 0 else 0.0
        lines.append(
            "%-10s %8d %11.2f%% %10s %10s %13.2f%%"
            % (
                accent,
                row["utts"],
                100.0 * row["utts"] / total_utts,
                _format_duration(row["dur1"]),
                _format_duration(row["dur2"]),
                ratio,
            )
        )
        for key in sums:
            sums[key] += row[key]
    count = len(rows)
    avg_ratio = 100.0 * sums["dur2"] / sums["dur1"] if sums["dur1"] > 0 else 0.0
    lines.append(
        "%-10s %8d %11.2f%% %10s %10s %13.2f%%"
        % (
            "Average",
            int(round(sums["utts"] / count)),
            100.0 / count if count else 0.0,
            _format_duration(sums["dur1"] / count),
            _format_duration(sums["dur2"] / count),
            avg_ratio,
        )
    )
    return "\n".join(lines) + "\n"
