"""CNN-IMU style late-fusion network, its training loop and checkpoints.

Each branch sees one group of channels (one sensor or limb) and runs a stack
of temporal 1-D convolutions followed by a branch-level dense layer. Branch
outputs are concatenated and classified by a dropout MLP.
"""

from __future__ import annotations

import copy
import io
import json
import logging
import re
import struct
from collections import OrderedDict, defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ShapeError, TrainError
from .segmentation import WindowSet

__all__ = [
    "ModelConfig", "TrainConfig", "TrainedModel", "LateFusionCNN",
    "build_model", "train", "predict", "predict_proba", "orthogonal_init",
    "branches_by_prefix", "stratified_split", "save_checkpoint", "load_checkpoint",
    "LARA_TRAIN", "MOTIONSENSE_TRAIN",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    branches: tuple
    n_classes: int
    window_size: int
    conv_layers_per_branch: int = 4
    filters: int = 64
    kernel_frames: int = 5
    branch_fc_units: int = 256
    fusion_fc_units: int = 256
    dropout_p: float = 0.5

    def __post_init__(self):
        branches = tuple(tuple(int(c) for c in b) for b in self.branches)
        object.__setattr__(self, "branches", branches)
        flat = sorted(c for b in branches for c in b)
        if not branches or any(len(b) == 0 for b in branches) or flat != list(range(len(flat))):
            raise ConfigError("bad_branches",
                              "branches must partition the channel indices into non-empty groups")
        if self.n_classes < 2:
            raise ConfigError("bad_classes", "need at least 2 classes")
        if self.kernel_frames > self.window_size:
            raise ConfigError("kernel_too_long",
                              f"kernel_frames {self.kernel_frames} > window_size {self.window_size}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("bad_dropout", str(self.dropout_p))

    @property
    def n_channels(self) -> int:
        return sum(len(b) for b in self.branches)

    @classmethod
    def single_branch(cls, n_channels: int, **kwargs) -> "ModelConfig":
        return cls(branches=(tuple(range(n_channels)),), **kwargs)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    max_epochs: int
    momentum: float = 0.9
    weight_decay: float = 5e-4
    noise_sigma: float = 0.01
    early_stop_patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.early_stop_patience) <= 0:
            raise ConfigError("bad_train_config", "learning_rate, batch_size, max_epochs and "
                                                  "patience must be positive")
        if min(self.momentum, self.weight_decay, self.noise_sigma) < 0:
            raise ConfigError("bad_train_config", "momentum, weight_decay, noise_sigma must be >= 0")
        if not 0 < self.val_fraction < 0.5:
            raise ConfigError("bad_train_config", "val_fraction must lie in (0, 0.5)")


LARA_TRAIN = TrainConfig(learning_rate=1e-4, batch_size=100, max_epochs=32)
MOTIONSENSE_TRAIN = TrainConfig(learning_rate=1e-3, batch_size=65, max_epochs=20)


def branches_by_prefix(channels: Sequence[str]) -> tuple:
    """Group channel indices by body-segment prefix (text before the first
    ``_``, ``.`` or ``:``). Falls back to a single branch when no prefix
    structure is found."""
    groups: "OrderedDict[str, list]" = OrderedDict()
    for i, name in enumerate(channels):
        prefix = re.split(r"[_.:]", name, maxsplit=1)[0] if re.search(r"[_.:]", name) else ""
        groups.setdefault(prefix, []).append(i)
    if len(groups) <= 1 or "" in groups:
        return (tuple(range(len(channels))),)
    return tuple(tuple(g) for g in groups.values())


class _Branch(nn.Module):
    def __init__(self, in_channels: int, cfg: ModelConfig):
        super().__init__()
        layers = []
        length = cfg.window_size
        channels = in_channels
        for i in range(cfg.conv_layers_per_branch):
            layers += [nn.Conv1d(channels, cfg.filters, cfg.kernel_frames), nn.ReLU()]
            channels = cfg.filters
            length -= cfg.kernel_frames - 1
            last = i == cfg.conv_layers_per_branch - 1
            if i % 2 == 1 or (last and cfg.conv_layers_per_branch == 1):
                layers.append(nn.MaxPool1d(2))
                length //= 2
            if length < 1:
                raise ConfigError("window_too_short",
                                  f"window_size {cfg.window_size} too short for "
                                  f"{cfg.conv_layers_per_branch} conv layers")
        self.features = nn.Sequential(*layers)
        self.fc = nn.Sequential(nn.Flatten(), nn.Linear(channels * length, cfg.branch_fc_units),
                                nn.ReLU())

    def forward(self, x):
        return self.fc(self.features(x))


class LateFusionCNN(nn.Module):
    """Input ``[batch, window_size, channels]``; output logits ``[batch, n_classes]``."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.branches = nn.ModuleList(_Branch(len(b), cfg) for b in cfg.branches)
        self.register_buffer("_index", torch.tensor([c for b in cfg.branches for c in b]),
                             persistent=False)
        self.fusion = nn.Sequential(
            nn.Dropout(cfg.dropout_p),
            nn.Linear(cfg.branch_fc_units * len(cfg.branches), cfg.fusion_fc_units),
            nn.ReLU(),
            nn.Dropout(cfg.dropout_p),
            nn.Linear(cfg.fusion_fc_units, cfg.n_classes),
        )

    def branch_outputs(self, x):
        x = x.transpose(1, 2)
        return [branch(x[:, list(group), :]) for branch, group in zip(self.branches, self.cfg.branches)]

    def forward(self, x):
        return self.fusion(torch.cat(self.branch_outputs(x), dim=1))


def orthogonal_init(module: nn.Module, seed: int) -> None:
    """Orthogonal weights and zero biases for every conv/linear layer,
    drawn from a generator seeded with ``seed``."""
    gen = torch.Generator().manual_seed(int(seed))
    for m in module.modules():
        if isinstance(m, (nn.Conv1d, nn.Linear)):
            with torch.no_grad():
                nn.init.orthogonal_(m.weight, generator=gen)
                nn.init.zeros_(m.bias)


@dataclass
class TrainedModel:
    config: ModelConfig
    network: LateFusionCNN
    seed: int = 0
    train_history: list = field(default_factory=list)
    stopped_epoch: int = 0


def build_model(config: ModelConfig, seed: int = 0, dtype=torch.float32) -> TrainedModel:
    """Untrained network with orthogonal initialization.

    Every branch is initialized from its own generator seeded with ``seed``,
    so branches of identical geometry start from identical weights; the
    fusion head uses ``seed + 1``.
    """
    net = LateFusionCNN(config).to(dtype)
    for branch in net.branches:
        orthogonal_init(branch, seed)
    orthogonal_init(net.fusion, seed + 1)
    return TrainedModel(config=config, network=net, seed=seed)


def _check_shape(model: TrainedModel, windows: WindowSet):
    cfg = model.config
    if windows.windows.shape[1:] != (cfg.window_size, cfg.n_channels):
        raise ShapeError("shape_mismatch",
                         f"windows {windows.windows.shape[1:]} vs model "
                         f"({cfg.window_size}, {cfg.n_channels})")


def canonical_order(windows: WindowSet) -> np.ndarray:
    """Permutation sorting windows by their source key; makes training
    independent of the order windows are handed in."""
    keys = [(s[0], s[1], s[2]) for s in windows.source]
    return np.array(sorted(range(len(keys)), key=lambda i: (keys[i], i)), dtype=np.int64)


def stratified_split(windows: WindowSet, val_fraction: float, seed: int):
    """Hold out ``val_fraction`` of each (subject, class) group.

    Groups with at least two windows contribute at least one validation
    window. Returns sorted (train_idx, val_idx) into ``windows``.
    """
    rng = np.random.default_rng(seed)
    groups = defaultdict(list)
    for i in canonical_order(windows):
        groups[(windows.source[i][0], int(windows.labels[i]))].append(i)
    val = []
    for key in sorted(groups):
        idx = np.array(groups[key])
        if len(idx) < 2:
            continue
        n_val = max(1, int(round(val_fraction * len(idx))))
        val.extend(rng.choice(idx, size=n_val, replace=False).tolist())
    val = np.array(sorted(val), dtype=np.int64)
    train = np.setdiff1d(np.arange(len(windows)), val)
    return train, val


def _dtype(model):
    return next(model.network.parameters()).dtype


def _loss_and_acc(net, x, y, batch_size):
    crit = nn.CrossEntropyLoss(reduction="sum")
    total, correct = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(y), batch_size):
            logits = net(x[start:start + batch_size])
            total += float(crit(logits, y[start:start + batch_size]))
            correct += int((logits.argmax(1) == y[start:start + batch_size]).sum())
    return total / max(len(y), 1), correct / max(len(y), 1)


def train(model: TrainedModel, train_windows: WindowSet, config: TrainConfig) -> TrainedModel:
    """Fit with cross-entropy and RMSProp (momentum, weight decay).

    Fresh Gaussian noise (``noise_sigma``) is drawn for the training inputs
    every epoch. A subject- and class-stratified ``val_fraction`` of the
    windows drives early stopping on validation loss; the best-validation
    weights are restored. The input model is left untouched.
    """
    _check_shape(model, train_windows)
    if len(np.unique(train_windows.labels)) < 2:
        raise TrainError("degenerate_labels", "training data holds fewer than 2 classes")
    dtype = _dtype(model)
    order = canonical_order(train_windows)
    ws = train_windows.subset(order)
    tr_idx, val_idx = stratified_split(ws, config.val_fraction, config.seed)
    if len(val_idx) == 0:
        val_idx, tr_idx = tr_idx[:0], tr_idx
    x_all = torch.as_tensor(ws.windows, dtype=dtype)
    y_all = torch.as_tensor(ws.labels, dtype=torch.long)
    x_tr, y_tr = x_all[tr_idx], y_all[tr_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    net = copy.deepcopy(model.network)
    opt = torch.optim.RMSprop(net.parameters(), lr=config.learning_rate,
                              momentum=config.momentum, weight_decay=config.weight_decay)
    crit = nn.CrossEntropyLoss()
    history = []
    best_loss, best_state, best_epoch, bad_epochs = np.inf, None, 0, 0
    rng = np.random.default_rng(config.seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        for epoch in range(1, config.max_epochs + 1):
            net.train()
            noise = torch.as_tensor(rng.normal(0.0, config.noise_sigma, size=tuple(x_tr.shape)),
                                    dtype=dtype) if config.noise_sigma > 0 else 0.0
            x_noisy = x_tr + noise
            perm = torch.as_tensor(rng.permutation(len(y_tr)))
            running = 0.0
            for start in range(0, len(y_tr), config.batch_size):
                batch = perm[start:start + config.batch_size]
                opt.zero_grad()
                loss = crit(net(x_noisy[batch]), y_tr[batch])
                loss.backward()
                opt.step()
                running += loss.item() * len(batch)
            net.eval()
            record = {"epoch": epoch, "train_loss": running / len(y_tr)}
            if len(y_val):
                record["val_loss"], record["val_acc"] = _loss_and_acc(net, x_val, y_val, 512)
            history.append(record)
            monitored = record.get("val_loss", record["train_loss"])
            if monitored < best_loss:
                best_loss, best_epoch, bad_epochs = monitored, epoch, 0
                best_state = copy.deepcopy(net.state_dict())
            else:
                bad_epochs += 1
                if bad_epochs >= config.early_stop_patience:
                    break
    net.load_state_dict(best_state)
    net.eval()
    log.debug("stopped after epoch %d, best epoch %d", history[-1]["epoch"], best_epoch)
    return TrainedModel(config=model.config, network=net, seed=model.seed,
                        train_history=history, stopped_epoch=history[-1]["epoch"])


def predict_proba(model: TrainedModel, windows: WindowSet, batch_size: int = 512) -> np.ndarray:
    _check_shape(model, windows)
    net = model.network
    was_training = net.training
    net.eval()
    x = torch.as_tensor(windows.windows, dtype=_dtype(model))
    out = []
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            out.append(torch.softmax(net(x[start:start + batch_size]), dim=1))
    net.train(was_training)
    if not out:
        return np.zeros((0, model.config.n_classes))
    return torch.cat(out).double().numpy()


def predict(model: TrainedModel, windows: WindowSet) -> np.ndarray:
    return predict_proba(model, windows).argmax(axis=1).astype(np.int64)


# -- checkpoints ---------------------------------------------------------------

_MAGIC = b"HARBCKPT"


def save_checkpoint(model: TrainedModel, path) -> Path:
    """One file: magic, 8-byte header length, JSON header, torch state dict."""
    header = json.dumps({
        "config": asdict(model.config),
        "seed": model.seed,
        "stopped_epoch": model.stopped_epoch,
        "history": model.train_history,
        "dtype": str(_dtype(model)).replace("torch.", ""),
    }).encode()
    buf = io.BytesIO()
    torch.save(model.network.state_dict(), buf)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(buf.getvalue())
    return path


def load_checkpoint(path) -> TrainedModel:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ConfigError("bad_checkpoint", f"{path} is not a checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        state = torch.load(io.BytesIO(fh.read()), weights_only=True)
    cfg = header["config"]
    cfg["branches"] = tuple(tuple(b) for b in cfg["branches"])
    model = build_model(ModelConfig(**cfg), header["seed"], dtype=getattr(torch, header["dtype"]))
    model.network.load_state_dict(state)
    model.network.eval()
    model.train_history = header["history"]
    model.stopped_epoch = header["stopped_epoch"]
    return model
