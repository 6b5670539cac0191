import numpy as np
import pytest
import torch
from sklearn.svm import LinearSVC

from harbias.classifier import (LARA_TRAIN, MOTIONSENSE_TRAIN, ModelConfig, TrainConfig,
                                branches_by_prefix, build_model, load_checkpoint, predict,
                                predict_proba, save_checkpoint, stratified_split, train)
from harbias.errors import ConfigError, ShapeError, TrainError
from harbias.segmentation import WindowSet

TINY = dict(conv_layers_per_branch=2, filters=8, kernel_frames=3, branch_fc_units=16,
            fusion_fc_units=16)


def separable(n_per_class=60, W=16, C=3, seed=0, n_subjects=3):
    """Two classes whose windows differ by a constant offset."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.3, size=(2 * n_per_class, W, C))
    y = np.repeat([0, 1], n_per_class)
    x[y == 1] += 1.5
    src = [(str(i % n_subjects + 1), 0, i) for i in range(len(y))]
    return WindowSet(x, y, src)


def test_forward_shape_lara_like():
    cfg = ModelConfig.single_branch(9, n_classes=6, window_size=200)
    logits = build_model(cfg).network(torch.zeros(65, 200, 9))
    assert logits.shape == (65, 6)


def test_config_errors():
    with pytest.raises(ConfigError):
        ModelConfig.single_branch(3, n_classes=2, window_size=4, kernel_frames=5)
    with pytest.raises(ConfigError):
        ModelConfig(branches=((0, 1), (1, 2)), n_classes=2, window_size=20)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0, batch_size=1, max_epochs=1)


def test_presets():
    assert (LARA_TRAIN.learning_rate, LARA_TRAIN.batch_size, LARA_TRAIN.max_epochs) == (1e-4, 100, 32)
    assert (MOTIONSENSE_TRAIN.learning_rate, MOTIONSENSE_TRAIN.batch_size,
            MOTIONSENSE_TRAIN.max_epochs) == (1e-3, 65, 20)
    assert LARA_TRAIN.momentum == 0.9 and LARA_TRAIN.weight_decay == 5e-4
    assert LARA_TRAIN.noise_sigma == 0.01


def test_branches_by_prefix():
    assert branches_by_prefix(["head_x", "head_y", "lhand_x"]) == ((0, 1), (2,))
    assert branches_by_prefix(["a", "b"]) == ((0, 1),)


def test_identical_branches_give_identical_outputs():
    cfg = ModelConfig(branches=((0, 1), (2, 3)), n_classes=3, window_size=20, **TINY)
    net = build_model(cfg, seed=7).network
    half = torch.randn(4, 20, 2)
    a, b = net.branch_outputs(torch.cat([half, half], dim=2))
    assert torch.equal(a, b)


def test_orthogonal_init():
    cfg = ModelConfig(branches=((0, 1, 2),), n_classes=4, window_size=32)
    net = build_model(cfg, seed=3, dtype=torch.float64).network
    checked = 0
    for m in net.modules():
        if isinstance(m, (torch.nn.Conv1d, torch.nn.Linear)):
            w = m.weight.detach().reshape(m.weight.shape[0], -1)
            if w.shape[0] > w.shape[1]:
                w = w.T
            err = (w @ w.T - torch.eye(w.shape[0], dtype=w.dtype)).abs().max()
            assert err < 1e-5
            assert torch.all(m.bias == 0)
            checked += 1
    assert checked >= 6


def test_softmax_rows_sum_to_one():
    cfg = ModelConfig.single_branch(3, n_classes=5, window_size=16, **TINY)
    ws = separable()
    proba = predict_proba(build_model(cfg, seed=1), ws)
    assert np.all(np.abs(proba.sum(axis=1) - 1) < 1e-6)


def test_gradient_matches_finite_differences():
    cfg = ModelConfig.single_branch(2, n_classes=3, window_size=8, conv_layers_per_branch=1,
                                    filters=4, kernel_frames=3, branch_fc_units=5,
                                    fusion_fc_units=5, dropout_p=0.0)
    net = build_model(cfg, seed=2, dtype=torch.float64).network
    gen = torch.Generator().manual_seed(0)
    for p in net.parameters():
        with torch.no_grad():
            p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    x = torch.randn(6, 8, 2, generator=gen, dtype=torch.float64)
    y = torch.tensor([0, 1, 2, 0, 1, 2])
    loss_fn = torch.nn.CrossEntropyLoss()

    def loss():
        return loss_fn(net(x), y)

    net.zero_grad()
    loss().backward()
    eps = 1e-6
    worst = 0.0
    with torch.no_grad():
        for p in net.parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss().item()
                flat[i] = orig - eps
                down = loss().item()
                flat[i] = orig
                fd = (up - down) / (2 * eps)
                rel = abs(fd - grad[i].item()) / max(abs(fd), abs(grad[i].item()), 1e-7)
                worst = max(worst, rel)
    assert worst < 1e-4


def test_dataset_is_margin_separable():
    ws = separable()
    svm = LinearSVC(C=10.0).fit(ws.windows.reshape(len(ws), -1), ws.labels)
    assert svm.score(ws.windows.reshape(len(ws), -1), ws.labels) == 1.0


def test_separable_reaches_99_percent_in_10_epochs():
    ws = separable()
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    model = train(build_model(cfg, 0), ws, TrainConfig(1e-3, 16, 10, early_stop_patience=10))
    assert model.stopped_epoch <= 10
    assert np.mean(predict(model, ws) == ws.labels) >= 0.99
    assert np.array_equal(predict(model, ws), ws.labels)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_loss_decreases_first_three_epochs(seed):
    ws = separable(seed=seed)
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    model = train(build_model(cfg, seed), ws,
                  TrainConfig(1e-4, 16, 3, seed=seed, early_stop_patience=3))
    losses = [h["train_loss"] for h in model.train_history]
    assert len(losses) == 3
    assert losses[0] > losses[1] > losses[2]


def test_training_is_deterministic_and_order_invariant():
    ws = separable(seed=5)
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    tc = TrainConfig(1e-3, 16, 4, seed=11)
    a = train(build_model(cfg, 0), ws, tc)
    b = train(build_model(cfg, 0), ws, tc)
    perm = np.random.default_rng(0).permutation(len(ws))
    c = train(build_model(cfg, 0), ws.subset(perm), tc)
    pa, pb, pc = (predict_proba(m, ws) for m in (a, b, c))
    assert np.array_equal(pa, pb) and np.array_equal(pa, pc)
    assert a.train_history == b.train_history == c.train_history


def test_train_leaves_input_model_untouched():
    ws = separable()
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    model = build_model(cfg, 0)
    before = {k: v.clone() for k, v in model.network.state_dict().items()}
    train(model, ws, TrainConfig(1e-3, 16, 2))
    assert all(torch.equal(before[k], v) for k, v in model.network.state_dict().items())


def test_early_stopping_restores_best():
    ws = separable()
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    model = train(build_model(cfg, 0), ws, TrainConfig(5e-2, 16, 40, early_stop_patience=2))
    hist = model.train_history
    best = min(h["val_loss"] for h in hist)
    assert model.stopped_epoch == len(hist)
    if len(hist) < 40:
        assert all(h["val_loss"] >= best for h in hist[-2:])


def test_stratified_split_covers_every_group():
    ws = separable(n_per_class=40, n_subjects=4)
    tr, val = stratified_split(ws, 0.1, seed=0)
    assert not set(tr) & set(val) and len(tr) + len(val) == len(ws)
    groups = {(ws.source[i][0], int(ws.labels[i])) for i in val}
    assert len(groups) == 8


def test_degenerate_labels_and_shape_errors():
    ws = separable()
    cfg = ModelConfig.single_branch(3, n_classes=2, window_size=16, **TINY)
    one = ws.subset(np.flatnonzero(ws.labels == 0))
    with pytest.raises(TrainError) as exc:
        train(build_model(cfg), one, TrainConfig(1e-3, 16, 1))
    assert exc.value.reason == "degenerate_labels"
    wrong = WindowSet(np.zeros((2, 16, 4)), [0, 1], [("1", 0, 0), ("1", 0, 1)])
    with pytest.raises(ShapeError):
        predict(build_model(cfg), wrong)


def test_prediction_codomain_and_repeatability():
    rng = np.random.default_rng(0)
    ws = WindowSet(rng.normal(size=(50, 16, 3)), rng.integers(0, 6, 50),
                   [("1", 0, i) for i in range(50)])
    cfg = ModelConfig.single_branch(3, n_classes=6, window_size=16, **TINY)
    model = train(build_model(cfg), ws, TrainConfig(1e-3, 16, 2))
    p1, p2 = predict(model, ws), predict(model, ws)
    assert np.array_equal(p1, p2)
    assert p1.min() >= 0 and p1.max() <= 5


def test_checkpoint_round_trip(tmp_path):
    ws = separable()
    cfg = ModelConfig(branches=((0,), (1, 2)), n_classes=2, window_size=16, **TINY)
    model = train(build_model(cfg, 4), ws, TrainConfig(1e-3, 16, 2))
    back = load_checkpoint(save_checkpoint(model, tmp_path / "m.ckpt"))
    assert back.config == model.config and back.stopped_epoch == model.stopped_epoch
    assert np.array_equal(predict_proba(back, ws), predict_proba(model, ws))
    (tmp_path / "junk").write_bytes(b"nope")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "junk")
