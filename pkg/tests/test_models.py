import copy
import struct

import numpy as np
import pytest

from subpgd import (Dataset, LinearClassifier, MlpClassifier, TrainConfig,
                    TrainingDiverged, load_idx, load_model, loss_input_gradient,
                    read_idx, save_model, synth_gaussian_dataset, train_sgd)
from subpgd.models import IdxError


# ---------------------------------------------------------------------------
# datasets and IDX files

def _write_idx_images(path, arr):
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, *arr.shape))
        f.write(arr.astype(np.uint8).tobytes())


def _write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    labels = [0, 2, 1, 2, 0]
    ip, lp = tmp_path / "imgs", tmp_path / "labels"
    _write_idx_images(ip, imgs)
    _write_idx_labels(lp, labels)
    data = load_idx(str(ip), str(lp))
    assert len(data) == 5
    assert data.n == 12
    assert data.num_classes == 3
    assert np.array_equal(data.labels, labels)
    assert np.allclose(data.inputs, imgs.reshape(5, -1) / 255.0)
    # byte 255 maps to exactly 1.0
    imgs255 = np.full((1, 2, 2), 255, dtype=np.uint8)
    _write_idx_images(ip, imgs255)
    _write_idx_labels(lp, [0])
    assert np.all(load_idx(str(ip), str(lp)).inputs == 1.0)


def test_idx_rejects_wrong_magic(tmp_path):
    p = tmp_path / "bad"
    with open(p, "wb") as f:
        f.write(struct.pack(">iiii", 0, 1, 2, 2))
        f.write(bytes(4))
    with pytest.raises(IdxError):
        read_idx(str(p))


def test_idx_rejects_truncation(tmp_path):
    p = tmp_path / "short"
    with open(p, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, 2, 2, 2))
        f.write(bytes(3))  # needs 8
    with pytest.raises(IdxError):
        read_idx(str(p))


def test_idx_rejects_count_mismatch(tmp_path):
    ip, lp = tmp_path / "i", tmp_path / "l"
    _write_idx_images(ip, np.zeros((3, 2, 2), dtype=np.uint8))
    _write_idx_labels(lp, [0, 1])
    with pytest.raises(IdxError):
        load_idx(str(ip), str(lp))


def test_dataset_validation_and_subset():
    with pytest.raises(ValueError):
        Dataset(inputs=np.array([[2.0]]), labels=np.array([0]), num_classes=1)
    with pytest.raises(ValueError):
        Dataset(inputs=np.zeros((2, 3)), labels=np.array([0, 5]), num_classes=2)
    d = Dataset(inputs=np.random.default_rng(0).uniform(0, 1, (6, 3)),
                labels=np.array([0, 1, 0, 1, 0, 1]), num_classes=2)
    s = d.subset([4, 0])
    assert len(s) == 2
    assert np.array_equal(s.labels, [0, 0])
    assert np.array_equal(s.inputs[0], d.inputs[4])


def test_synth_gaussian_dataset_properties():
    data = synth_gaussian_dataset(16, 50, 0.8, seed=1)
    assert len(data) == 100
    assert data.num_classes == 2
    assert np.all((data.inputs >= 0) & (data.inputs <= 1))
    assert set(np.unique(data.labels)) == {0, 1}
    again = synth_gaussian_dataset(16, 50, 0.8, seed=1)
    assert np.array_equal(data.inputs, again.inputs)


# ---------------------------------------------------------------------------
# models and gradients

def _fd_input_grad(model, x, y, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (model.loss_and_input_grad(xp, y)[0]
                - model.loss_and_input_grad(xm, y)[0]) / (2 * h)
    return g


def test_linear_classifier_basics():
    m = LinearClassifier(w=np.array([1.0, -2.0]), b=0.5)
    assert m.score(np.array([1.0, 1.0])) == pytest.approx(-0.5)
    assert m.predict(np.array([1.0, 1.0])) == 0
    assert m.predict(np.array([1.0, 0.0])) == 1
    batch = m.predict(np.array([[1.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(batch, [0, 1])


def test_linear_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    m = LinearClassifier(w=rng.standard_normal(6), b=0.3)
    for y in (0, 1):
        x = rng.uniform(0, 1, 6)
        _, g = m.loss_and_input_grad(x, y)
        fd = _fd_input_grad(m, x, y)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12) <= 1e-5


def test_mlp_init_shapes_and_determinism():
    m = MlpClassifier.init([5, 8, 3], seed=4)
    assert tuple(m.widths) == (5, 8, 3)
    assert m.n_inputs == 5 and m.num_classes == 3
    m2 = MlpClassifier.init([5, 8, 3], seed=4)
    for a, b in zip(m.weights, m2.weights):
        assert np.array_equal(a, b)


def test_mlp_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    m = MlpClassifier.init([7, 6, 4], seed=0)
    x = rng.uniform(0, 1, 7)
    _, g = m.loss_and_input_grad(x, 2)
    fd = _fd_input_grad(m, x, 2)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-5


def test_mlp_batch_gradient_matches_single():
    rng = np.random.default_rng(6)
    m = MlpClassifier.init([5, 6, 3], seed=1)
    X = rng.uniform(0, 1, (4, 5))
    Y = np.array([0, 2, 1, 0])
    losses, grads = m.loss_and_input_grad(X, Y)
    for k in range(4):
        lk, gk = m.loss_and_input_grad(X[k], int(Y[k]))
        assert losses[k] == pytest.approx(lk, rel=1e-12)
        assert np.allclose(grads[k], gk, atol=1e-12)


def test_loss_input_gradient_helper():
    m = MlpClassifier.init([4, 5, 2], seed=2)
    x = np.full(4, 0.5)
    loss, g = loss_input_gradient(m, x, 1)
    assert np.isfinite(loss)
    assert g.shape == (4,)


def test_mlp_rejects_nonfinite_activations():
    m = MlpClassifier.init([3, 4, 2], seed=0)
    m.weights[0][:] = 1e308  # summing three of these overflows to inf
    with pytest.raises(FloatingPointError), np.errstate(over="ignore"):
        m.logits(np.ones(3))


# ---------------------------------------------------------------------------
# training

def test_train_sgd_separates_gaussians():
    data = synth_gaussian_dataset(16, 200, 1.0, seed=7)
    val = synth_gaussian_dataset(16, 100, 1.0, seed=7)
    model = LinearClassifier(w=np.zeros(16), b=0.0)
    res = train_sgd(model, data, val, TrainConfig(lr=0.5, epochs=15, seed=0))
    assert res.best_val_acc >= 0.99
    assert res.epochs_run == 15


def test_train_sgd_zero_epochs_is_identity():
    data = synth_gaussian_dataset(8, 20, 0.5, seed=3)
    model = MlpClassifier.init([8, 6, 2], seed=1)
    before = [w.copy() for w in model.weights]
    train_sgd(model, data, None, TrainConfig(epochs=0, seed=0))
    for a, b in zip(before, model.weights):
        assert np.array_equal(a, b)


def test_train_sgd_is_deterministic():
    data = synth_gaussian_dataset(10, 60, 0.6, seed=9)
    runs = []
    for _ in range(2):
        m = MlpClassifier.init([10, 8, 2], seed=5)
        train_sgd(m, data, None, TrainConfig(lr=0.1, epochs=3, seed=11))
        runs.append(m)
    for a, b in zip(runs[0].weights, runs[1].weights):
        assert np.array_equal(a, b)


def test_train_sgd_reports_divergence_epoch():
    # lr large enough that one update pushes both weight matrices to ~1e200,
    # so the next forward pass overflows
    data = synth_gaussian_dataset(6, 40, 0.5, seed=2)
    model = MlpClassifier.init([6, 8, 2], seed=0)
    with pytest.raises(TrainingDiverged) as exc:
        with np.errstate(over="ignore"):
            train_sgd(model, data, None, TrainConfig(lr=1e200, epochs=5, seed=0))
    assert "epoch" in str(exc.value)


def test_train_sgd_restores_best_params():
    # with an aggressive late lr the final epoch can be worse; the returned
    # parameters must match the best recorded validation accuracy
    data = synth_gaussian_dataset(12, 150, 0.8, seed=4)
    val = synth_gaussian_dataset(12, 80, 0.8, seed=4)
    model = LinearClassifier(w=np.zeros(12), b=0.0)
    res = train_sgd(model, data, val, TrainConfig(lr=0.3, epochs=10, seed=1))
    acc = np.mean(model.predict(val.inputs) == val.labels)
    assert acc == pytest.approx(res.best_val_acc, abs=1e-12)


# ---------------------------------------------------------------------------
# serialization

def test_save_load_round_trip(tmp_path):
    for model in (LinearClassifier(w=np.array([0.5, -1.5]), b=0.25),
                  MlpClassifier.init([4, 5, 3], seed=8)):
        path = tmp_path / "m.npz"
        save_model(model, str(path))
        back = load_model(str(path))
        assert type(back) is type(model)
        if isinstance(model, LinearClassifier):
            assert np.array_equal(back.w, model.w) and back.b == model.b
        else:
            for a, b in zip(back.weights, model.weights):
                assert np.array_equal(a, b)
            for a, b in zip(back.biases, model.biases):
                assert np.array_equal(a, b)


def test_save_model_is_byte_deterministic(tmp_path):
    model = MlpClassifier.init([6, 4, 2], seed=3)
    p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
    save_model(model, str(p1))
    save_model(model, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_load_model_rejects_unknown_kind(tmp_path):
    p = tmp_path / "x.npz"
    np.savez(p, kind=np.array("mystery"))
    with pytest.raises(ValueError):
        load_model(str(p))
