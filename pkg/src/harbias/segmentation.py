"""Sliding-window segmentation, per-channel normalization and Gaussian noise."""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import LabeledDataset, Recording, natural_key
from .errors import ArgumentError

__all__ = [
    "WindowConfig", "WindowSet", "Normalizer", "segment", "segment_dataset",
    "add_gaussian_noise", "fit_normalizer", "apply_normalizer", "window_count",
    "cached_segment_dataset", "VARIANCE_EPS",
]

VARIANCE_EPS = 1e-8


@dataclass(frozen=True)
class WindowConfig:
    window_size: int
    step: int
    label_rule: str = "majority"
    normalize: bool = True

    def __post_init__(self):
        if self.window_size < 1 or not 1 <= self.step <= self.window_size:
            raise ArgumentError("bad_window",
                                f"need 1 <= step <= window_size, got step={self.step}, "
                                f"window_size={self.window_size}")
        if self.label_rule not in ("majority", "last_frame"):
            raise ArgumentError("bad_window", f"unknown label_rule {self.label_rule!r}")


@dataclass(frozen=True, eq=False)
class WindowSet:
    """``windows`` is ``[n, window_size, channels]``; ``source`` holds one
    ``(subject_id, recording_index, start_frame)`` tuple per window."""

    windows: np.ndarray
    labels: np.ndarray
    source: tuple = field(default=())
    augmented: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "source", tuple(tuple(s) for s in self.source))
        if self.windows.ndim != 3:
            raise ArgumentError("bad_shape", "windows must be [n, window_size, channels]")
        if not (len(self.windows) == len(self.labels) == len(self.source)):
            raise ArgumentError("bad_shape", "windows, labels and source lengths differ")

    def __len__(self):
        return len(self.labels)

    @property
    def window_size(self) -> int:
        return self.windows.shape[1]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    @property
    def subjects(self) -> list:
        return sorted({s[0] for s in self.source}, key=natural_key)

    def subset(self, index) -> "WindowSet":
        index = np.asarray(index, dtype=np.int64)
        return WindowSet(self.windows[index], self.labels[index],
                         tuple(self.source[i] for i in index), self.augmented)

    def with_windows(self, windows: np.ndarray, augmented: Optional[bool] = None) -> "WindowSet":
        return WindowSet(windows, self.labels, self.source,
                         self.augmented if augmented is None else augmented)

    @classmethod
    def empty(cls, window_size: int, n_channels: int) -> "WindowSet":
        return cls(np.zeros((0, window_size, n_channels)), np.zeros(0, dtype=np.int64), ())

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        sets = list(sets)
        if not sets:
            raise ArgumentError("empty", "nothing to concatenate")
        return cls(np.concatenate([s.windows for s in sets]),
                   np.concatenate([s.labels for s in sets]),
                   tuple(src for s in sets for src in s.source),
                   any(s.augmented for s in sets))


def window_count(n_frames: int, window_size: int, step: int) -> int:
    if n_frames < window_size:
        return 0
    return (n_frames - window_size) // step + 1


def _window_labels(frame_labels: np.ndarray, starts: np.ndarray, config: WindowConfig) -> np.ndarray:
    w = config.window_size
    last = frame_labels[starts + w - 1]
    if config.label_rule == "last_frame":
        return last
    n_classes = int(frame_labels.max()) + 1
    views = sliding_window_view(frame_labels, w)[starts]
    onehot = np.zeros((len(starts), n_classes), dtype=np.int64)
    rows = np.repeat(np.arange(len(starts)), w)
    np.add.at(onehot, (rows, views.ravel()), 1)
    best = onehot.max(axis=1)
    labels = onehot.argmax(axis=1)
    tied = (onehot == best[:, None]).sum(axis=1) > 1
    for i in np.flatnonzero(tied):
        candidates = onehot[i] == best[i]
        if candidates[last[i]]:
            labels[i] = last[i]
        else:
            # latest-occurring tied label
            for lab in views[i][::-1]:
                if candidates[lab]:
                    labels[i] = lab
                    break
    return labels


def segment(recording: Recording, config: WindowConfig, recording_index: int = 0) -> WindowSet:
    """Cut ``recording`` into windows starting at frames 0, step, 2*step, ...

    Recordings shorter than one window yield an empty set. Window labels
    follow ``config.label_rule``; majority ties go to the last frame's label.
    """
    n = window_count(recording.n_frames, config.window_size, config.step)
    if n == 0:
        return WindowSet.empty(config.window_size, len(recording.channels))
    starts = np.arange(n) * config.step
    views = sliding_window_view(recording.samples, config.window_size, axis=0)[starts]
    windows = np.ascontiguousarray(views.transpose(0, 2, 1))
    labels = _window_labels(recording.frame_labels, starts, config)
    source = tuple((recording.subject_id, recording_index, int(s)) for s in starts)
    return WindowSet(windows, labels, source)


def segment_dataset(dataset: LabeledDataset, subject_ids: Iterable[str], config: WindowConfig) -> WindowSet:
    """Segment every recording of ``subject_ids`` in (subject, recording, start) order."""
    wanted = sorted({str(s) for s in subject_ids}, key=natural_key)
    parts = []
    for sid in wanted:
        for k, rec in enumerate(dataset.recordings_of(sid)):
            parts.append(segment(rec, config, k))
    if not parts:
        return WindowSet.empty(config.window_size, len(dataset.channels))
    return WindowSet.concat(parts)


def add_gaussian_noise(windows: WindowSet, sigma: float, seed: int) -> WindowSet:
    """Add i.i.d. N(0, sigma^2) noise to every sample."""
    if sigma < 0:
        raise ArgumentError("bad_sigma", f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return windows
    rng = np.random.default_rng(seed)
    noisy = windows.windows + rng.normal(0.0, sigma, size=windows.windows.shape)
    return windows.with_windows(noisy, augmented=True)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(train_windows: WindowSet) -> Normalizer:
    if len(train_windows) == 0:
        raise ArgumentError("empty", "cannot fit a normalizer on zero windows")
    flat = train_windows.windows.reshape(-1, train_windows.n_channels)
    mean = flat.mean(axis=0)
    var = flat.var(axis=0)
    low = var < VARIANCE_EPS
    if np.any(low):
        warnings.warn(f"channels {np.flatnonzero(low).tolist()} have ~zero variance; "
                      f"clamping to {VARIANCE_EPS}", RuntimeWarning, stacklevel=2)
        var = np.where(low, VARIANCE_EPS, var)
    return Normalizer(mean, np.sqrt(var))


def apply_normalizer(normalizer: Normalizer, windows: WindowSet) -> WindowSet:
    return windows.with_windows((windows.windows - normalizer.mean) / normalizer.std)


# -- on-disk window cache ------------------------------------------------------

def _dataset_fingerprint(dataset: LabeledDataset, subject_ids) -> str:
    h = hashlib.sha256()
    h.update(dataset.name.encode())
    for sid in subject_ids:
        for rec in dataset.recordings_of(sid):
            h.update(rec.subject_id.encode())
            h.update(np.ascontiguousarray(rec.samples).tobytes())
            h.update(np.ascontiguousarray(rec.frame_labels).tobytes())
    return h.hexdigest()


def cached_segment_dataset(dataset: LabeledDataset, subject_ids, config: WindowConfig,
                           cache_dir=None) -> WindowSet:
    """:func:`segment_dataset` backed by an optional on-disk cache.

    The cache directory defaults to ``$AUDIT_CACHE_DIR``; without it this is
    a plain call. Entries are ``<key>.npz`` plus a ``<key>.json`` sidecar
    recording the window config and key.
    """
    cache_dir = cache_dir or os.environ.get("AUDIT_CACHE_DIR")
    if not cache_dir:
        return segment_dataset(dataset, subject_ids, config)
    ids = sorted({str(s) for s in subject_ids}, key=natural_key)
    key_src = json.dumps({"config": asdict(config), "subjects": ids,
                          "data": _dataset_fingerprint(dataset, ids)}, sort_keys=True)
    key = hashlib.sha256(key_src.encode()).hexdigest()[:32]
    cache = Path(cache_dir)
    blob, sidecar = cache / f"{key}.npz", cache / f"{key}.json"
    if blob.is_file() and sidecar.is_file():
        with np.load(blob, allow_pickle=False) as z:
            source = tuple((str(s), int(r), int(f)) for s, r, f in
                           zip(z["src_subject"], z["src_rec"], z["src_start"]))
            return WindowSet(z["windows"], z["labels"], source)
    ws = segment_dataset(dataset, ids, config)
    cache.mkdir(parents=True, exist_ok=True)
    np.savez(blob, windows=ws.windows, labels=ws.labels,
             src_subject=np.array([s[0] for s in ws.source], dtype=str),
             src_rec=np.array([s[1] for s in ws.source], dtype=np.int64),
             src_start=np.array([s[2] for s in ws.source], dtype=np.int64))
    sidecar.write_text(json.dumps({"key": key, "config": asdict(config), "subjects": ids,
                                   "n_windows": len(ws)}, indent=2))
    return ws
