"""Synthetic HAR datasets with profile-linked motion idiosyncrasies.

Every activity class has a base waveform on each channel: a fundamental at a
class-specific frequency plus a second harmonic whose phase offset gives the
class its shape. A subject's rendition of that waveform is modulated by
their binarized profile, scaled by ``idiosyncrasy_strength``:

* weight class -> amplitude x (1 +/- 0.3)
* age class    -> frequency x (1 -/+ 0.1), old subjects move slower
* gender       -> harmonic phase + pi/4 for male subjects

plus per-subject random jitter of the same three quantities. The frequency
shift is kept small enough that spectral peaks of young and old subjects
never fully separate within strength [0, 1]; beyond that point jitter keeps
growing while the profile contrast saturates. At strength 0
every subject renders every class identically and only the white noise
differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import LabeledDataset, Recording, SubjectProfile
from .curation import binarize_profiles
from .errors import ArgumentError

__all__ = ["SynthConfig", "generate_synthetic", "PROFILE_CODES", "subject_signature",
           "profile_separation"]

PROFILE_CODES = ("YF", "OF", "YM", "OM")

AMPLITUDE_SHIFT = 0.3
FREQUENCY_SHIFT = 0.1
PHASE_SHIFT = np.pi / 4
# per-subject jitter SDs at strength 1
AMPLITUDE_JITTER = 0.05
FREQUENCY_JITTER = 0.03
PHASE_JITTER = 0.25
CHANNEL_GAIN_JITTER = 0.1


@dataclass(frozen=True)
class SynthConfig:
    n_subjects_per_profile: Mapping[str, int] = field(
        default_factory=lambda: {"YF": 4, "OF": 4, "YM": 4, "OM": 4})
    n_classes: int = 6
    frames_per_recording: int = 3000
    channels: int = 6
    sampling_rate: float = 50.0
    idiosyncrasy_strength: float = 0.6
    noise_sd: float = 0.1
    seed: int = 0
    recordings_per_subject: int = 1
    base_frequency: float = 1.8
    frequency_ratio: float = 1.25
    phase_drift: float = 0.05
    class_weights: Optional[Sequence[float]] = None
    name: str = "synthetic"

    def __post_init__(self):
        counts = dict(self.n_subjects_per_profile)
        unknown = set(counts) - set(PROFILE_CODES)
        if unknown:
            raise ArgumentError("bad_profile", f"unknown profile codes {sorted(unknown)}")
        if any(v < 0 for v in counts.values()):
            raise ArgumentError("bad_profile", "profile counts must be >= 0")
        object.__setattr__(self, "n_subjects_per_profile",
                           {k: int(counts.get(k, 0)) for k in PROFILE_CODES})
        if self.n_classes < 2 or self.channels < 1:
            raise ArgumentError("bad_config", "need n_classes >= 2 and channels >= 1")
        if self.frames_per_recording < self.n_classes:
            raise ArgumentError("bad_config", "frames_per_recording must cover every class")
        if not 0 <= self.idiosyncrasy_strength <= 1:
            raise ArgumentError("bad_config", "idiosyncrasy_strength must lie in [0, 1]")
        if self.noise_sd < 0 or self.phase_drift < 0 or self.sampling_rate <= 0:
            raise ArgumentError("bad_config", "noise_sd >= 0 and sampling_rate > 0 required")
        if self.class_weights is not None and (len(self.class_weights) != self.n_classes
                                               or min(self.class_weights) <= 0):
            raise ArgumentError("bad_config", "class_weights needs n_classes positive entries")

    @property
    def n_subjects(self) -> int:
        return sum(self.n_subjects_per_profile.values())


def _ages(rng, n_young: int, n_old: int) -> tuple:
    """Young and old ages that a median split maps back to these counts."""
    n = n_young + n_old
    if n_young < n_old:
        raise ArgumentError("unrealizable_profile_counts",
                            "a median split puts at least half the cohort in the young class; "
                            f"{n_old} old vs {n_young} young cannot be reproduced")
    young = np.sort(rng.integers(20, 36, size=n_young))
    old = rng.integers(45, 66, size=n_old)
    # young ranks that straddle the median must tie with it
    n_tied = n_young - n // 2 + 1
    if n_young > n_old and n_tied > 1:
        young[-n_tied:] = young[-1]
    return young, old


def _subjects(config: SynthConfig, rng) -> list:
    codes = [c for c in PROFILE_CODES for _ in range(config.n_subjects_per_profile[c])]
    codes = [codes[i] for i in rng.permutation(len(codes))]
    young_idx = [i for i, c in enumerate(codes) if c[0] == "Y"]
    old_idx = [i for i, c in enumerate(codes) if c[0] == "O"]
    young_ages, old_ages = _ages(rng, len(young_idx), len(old_idx))
    ages = np.empty(len(codes), dtype=np.int64)
    ages[young_idx] = rng.permutation(young_ages)
    ages[old_idx] = old_ages
    subjects = []
    for i, code in enumerate(codes):
        male = code[1] == "M"
        height = rng.normal(178.0, 7.0) if male else rng.normal(165.0, 6.0)
        weight = rng.normal(80.0, 10.0) if male else rng.normal(62.0, 8.0)
        subjects.append(SubjectProfile(
            subject_id=str(i + 1), age=int(ages[i]), gender="male" if male else "female",
            height=round(float(height), 1), weight=round(float(max(weight, 35.0)), 1)))
    return subjects


def _segment_lengths(config: SynthConfig, rng) -> np.ndarray:
    weights = np.ones(config.n_classes) if config.class_weights is None \
        else np.asarray(config.class_weights, dtype=float)
    lengths = np.floor(config.frames_per_recording * weights / weights.sum()).astype(np.int64)
    lengths[rng.integers(config.n_classes)] += config.frames_per_recording - lengths.sum()
    return lengths


def generate_synthetic(config: SynthConfig) -> LabeledDataset:
    if config.n_subjects < 8:
        raise ArgumentError("too_few_subjects", "need at least 8 subjects (4 train + 4 test)")
    root = np.random.SeedSequence([config.seed, 0x5E7])
    subjects = _subjects(config, np.random.default_rng(root.spawn(1)[0]))
    binarized = {p.subject_id: p for p in binarize_profiles(subjects)}

    # class/channel structure shared by all subjects
    shape_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC1A55]))
    fundamentals = config.base_frequency * config.frequency_ratio ** np.arange(config.n_classes)
    harmonic_phase = 2 * np.pi * np.arange(config.n_classes) / config.n_classes
    fund_gain = shape_rng.uniform(0.6, 1.4, size=config.channels)
    harm_gain = shape_rng.uniform(0.3, 0.8, size=config.channels)
    channel_lag = shape_rng.uniform(0, 2 * np.pi, size=config.channels)

    s = config.idiosyncrasy_strength
    channels = tuple(f"ch{j}" for j in range(config.channels))
    recordings = []
    for subject in subjects:
        sid = int(subject.subject_id)
        prof = binarized[subject.subject_id]
        jit = np.random.default_rng(np.random.SeedSequence([config.seed, sid, 0xA11]))
        heavy = prof.weight_class.value == "heavy"
        amp = (1 + s * AMPLITUDE_SHIFT * (1 if heavy else -1)) \
            * (1 + s * AMPLITUDE_JITTER * jit.standard_normal())
        freq = (1 + s * FREQUENCY_SHIFT * (-1 if prof.age_class.value == "old" else 1)) \
            * (1 + s * FREQUENCY_JITTER * jit.standard_normal())
        phase = s * (PHASE_SHIFT * (prof.gender.value == "male")
                     + PHASE_JITTER * jit.standard_normal())
        gains = 1 + s * CHANNEL_GAIN_JITTER * jit.standard_normal(config.channels)
        for k in range(config.recordings_per_subject):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, sid, k]))
            order = rng.permutation(config.n_classes)
            lengths = _segment_lengths(config, rng)
            parts, labels = [], []
            for c in order:
                n = int(lengths[c])
                t = np.arange(n) / config.sampling_rate
                # tempo drift keeps window phases from locking to the step size
                drift = np.cumsum(rng.normal(0.0, config.phase_drift, size=n))
                theta = (2 * np.pi * fundamentals[c] * freq * t + drift
                         + rng.uniform(0, 2 * np.pi))[:, None] + channel_lag[None, :]
                wave = fund_gain * np.sin(theta) \
                    + harm_gain * np.sin(2 * theta + harmonic_phase[c] + phase)
                parts.append(amp * gains * wave)
                labels.append(np.full(n, c, dtype=np.int64))
            samples = np.concatenate(parts)
            samples = samples + rng.normal(0.0, config.noise_sd, size=samples.shape)
            recordings.append(Recording(subject.subject_id, config.sampling_rate, channels,
                                        samples, np.concatenate(labels)))
    return LabeledDataset(name=config.name,
                          class_names=tuple(f"activity_{c}" for c in range(config.n_classes)),
                          subjects=subjects, recordings=recordings)


def subject_signature(dataset: LabeledDataset, subject_id: str, window_size: int = 100) -> np.ndarray:
    """Per-class mean magnitude spectrum of a subject's windows, flattened.

    Averaging magnitude spectra (rather than raw windows) keeps the
    signature independent of where each window happens to start in the
    waveform cycle.
    """
    from .segmentation import WindowConfig, segment_dataset

    ws = segment_dataset(dataset, [subject_id], WindowConfig(window_size, window_size // 2))
    spec = np.abs(np.fft.rfft(ws.windows, axis=1))
    out = []
    for c in range(len(dataset.class_names)):
        mask = ws.labels == c
        out.append(spec[mask].mean(axis=0) if mask.any() else np.zeros(spec.shape[1:]))
    return np.concatenate([o.ravel() for o in out])


def profile_separation(dataset: LabeledDataset, window_size: int = 100) -> float:
    """Mean cross-profile minus mean same-profile signature distance."""
    profiles = {p.subject_id: p.code for p in binarize_profiles(dataset.subjects)}
    ids = dataset.subject_ids
    sig = {sid: subject_signature(dataset, sid, window_size) for sid in ids}
    same, cross = [], []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            d = float(np.linalg.norm(sig[a] - sig[b]))
            (same if profiles[a] == profiles[b] else cross).append(d)
    return float(np.mean(cross) - np.mean(same))
