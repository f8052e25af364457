"""Datasets, linear and MLP classifiers, plain-numpy training.

Both classifier types expose the same attack-facing surface: predict(x) and
loss_input_gradient(model, x, y), batched over leading axes. Gradients are
exact (hand backprop) and are what PGD consumes.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .seeding import as_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    """Raised for malformed IDX files or mismatched image/label pairs."""


@dataclass
class Dataset:
    """Inputs in [0, 1]^n with integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be (N, n), got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must be one per input row")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValueError("inputs must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range for num_classes")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes)


# ---------------------------------------------------------------------------
# IDX files

def read_idx(path):
    """Read one big-endian IDX file (2-d image tensor or 1-d label vector)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise IdxError(f"{path}: truncated header")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic == IMAGE_MAGIC:
        if len(raw) < 16:
            raise IdxError(f"{path}: truncated image header")
        count, rows, cols = struct.unpack(">iii", raw[4:16])
        want = 16 + count * rows * cols
        if len(raw) != want:
            raise IdxError(f"{path}: expected {want} bytes, found {len(raw)}")
        data = np.frombuffer(raw, dtype=np.uint8, offset=16)
        return data.reshape(count, rows * cols)
    if magic == LABEL_MAGIC:
        count = struct.unpack(">i", raw[4:8])[0]
        want = 8 + count
        if len(raw) != want:
            raise IdxError(f"{path}: expected {want} bytes, found {len(raw)}")
        return np.frombuffer(raw, dtype=np.uint8, offset=8).copy()
    raise IdxError(f"{path}: unknown magic 0x{magic:08x}")


def load_idx(images_path, labels_path):
    """Load an image/label IDX pair as a Dataset with pixels scaled to [0, 1]."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 2:
        raise IdxError(f"{images_path}: not an image file")
    if labels.ndim != 1:
        raise IdxError(f"{labels_path}: not a label file")
    if images.shape[0] != labels.shape[0]:
        raise IdxError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    return Dataset(images.astype(float) / 255.0, labels.astype(np.int64),
                   num_classes=int(labels.max()) + 1 if labels.size else 1)


def synth_gaussian_dataset(n, per_class, separation, seed, noise_sigma=0.05):
    """Two isotropic Gaussian blobs inside [0, 1]^n.

    Class means sit at 0.5 +- (separation / 2) u for a random unit vector u;
    samples are clipped to the box. Labels are 0 and 1.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = as_rng(seed)
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    offsets = np.array([-0.5, 0.5]) * float(separation)
    xs, ys = [], []
    for label, off in enumerate(offsets):
        pts = 0.5 + off * u + noise_sigma * rng.standard_normal((per_class, n))
        xs.append(np.clip(pts, 0.0, 1.0))
        ys.append(np.full(per_class, label, dtype=np.int64))
    return Dataset(np.vstack(xs), np.concatenate(ys), num_classes=2)


# ---------------------------------------------------------------------------
# classifiers

def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


@dataclass
class LinearClassifier:
    """Binary linear model: predicts 1 when w^T x + b > 0, trained by logistic loss."""

    w: np.ndarray
    b: float

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).ravel()
        self.b = float(self.b)

    @property
    def n_inputs(self):
        return self.w.size

    @property
    def num_classes(self):
        return 2

    def score(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.w + self.b

    def predict(self, x):
        s = self.score(x)
        out = (s > 0).astype(np.int64)
        return int(out) if np.isscalar(s) or s.ndim == 0 else out

    def loss_and_input_grad(self, x, y):
        """Logistic loss and its gradient in x; batched over leading axis."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = x @ self.w + self.b
        # log(1 + exp(-(2y-1) s)), stable form
        m = (2.0 * y - 1.0) * s
        loss = np.logaddexp(0.0, -m)
        if not np.all(np.isfinite(loss)):
            raise FloatingPointError("non-finite loss")
        coeff = _sigmoid(s) - y
        grad = np.multiply.outer(coeff, self.w) if coeff.ndim else coeff * self.w
        return loss, grad


def linear_forward(model, x):
    """Raw score w^T x + b of a linear model."""
    return model.score(x)


@dataclass
class MlpClassifier:
    """Fully connected ReLU network with softmax cross-entropy loss.

    weights[i] has shape (fan_in, fan_out); forward is x @ W + b per layer
    with ReLU between layers and raw logits at the output.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @classmethod
    def init(cls, widths, seed):
        """He-initialized network with layer sizes widths = [n, h1, ..., K]."""
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        rng = as_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            ws.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
            bs.append(np.zeros(fan_out))
        return cls(weights=ws, biases=bs)

    @property
    def n_inputs(self):
        return self.weights[0].shape[0]

    @property
    def num_classes(self):
        return self.weights[-1].shape[1]

    @property
    def widths(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def _forward(self, x):
        """Returns (pre-activations per layer, activations per layer)."""
        a = np.asarray(x, dtype=float)
        zs, acts = [], [a]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            if not np.all(np.isfinite(z)):
                raise FloatingPointError("non-finite activations in forward pass")
            zs.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
        return zs, acts

    def logits(self, x):
        return self._forward(x)[1][-1]

    def predict(self, x):
        lg = self.logits(x)
        out = np.argmax(lg, axis=-1)
        return int(out) if out.ndim == 0 else out.astype(np.int64)

    def loss_and_input_grad(self, x, y):
        """Softmax cross-entropy and its exact gradient in x.

        Accepts a single (n,) input with scalar label or a batch (B, n) with
        (B,) labels; returns loss and gradient with matching leading shape.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
        zs, acts = self._forward(xb)
        logits = acts[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=1))
        loss = logz - shifted[np.arange(len(yb)), yb]
        if not np.all(np.isfinite(loss)):
            raise FloatingPointError("non-finite loss")
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = probs
        delta[np.arange(len(yb)), yb] -= 1.0
        for i in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[i].T) * (zs[i - 1] > 0.0)
        grad = delta @ self.weights[0].T
        if single:
            return float(loss[0]), grad[0]
        return loss, grad

    def accuracy(self, data):
        return float(np.mean(self.predict(data.inputs) == data.labels))


def loss_input_gradient(model, x, y):
    """Loss and d(loss)/dx for either classifier type."""
    return model.loss_and_input_grad(x, y)

# ---------------------------------------------------------------------------
# training

class TrainingDiverged(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 20
    weight_decay: float = 0.0
    lr_drop: float = 0.1
    plateau_patience: int = 10
    plateau_min_gain: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")


@dataclass
class TrainResult:
    best_val_acc: float
    final_val_acc: float
    epochs_run: int
    history: list


def _param_grads_linear(model, xb, yb):
    s = xb @ model.w + model.b
    m = (2.0 * yb - 1.0) * s
    loss = float(np.mean(np.logaddexp(0.0, -m)))
    coeff = (_sigmoid(s) - yb) / len(yb)
    return loss, [coeff @ xb, float(coeff.sum())]


def _param_grads_mlp(model, xb, yb):
    zs, acts = model._forward(xb)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(logz - shifted[np.arange(len(yb)), yb]))
    delta = np.exp(shifted)
    delta /= delta.sum(axis=1, keepdims=True)
    delta[np.arange(len(yb)), yb] -= 1.0
    delta /= len(yb)
    grads = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (zs[i - 1] > 0.0)
    return loss, grads


def _get_params(model):
    if isinstance(model, LinearClassifier):
        return [model.w, np.array([model.b])]
    out = []
    for W, b in zip(model.weights, model.biases):
        out.extend([W, b])
    return out


def _set_params(model, params):
    if isinstance(model, LinearClassifier):
        model.w = params[0].copy()
        model.b = float(params[1][0])
        return
    model.weights = [params[2 * i].copy() for i in range(len(params) // 2)]
    model.biases = [params[2 * i + 1].copy() for i in range(len(params) // 2)]


def train_sgd(model, train, val, cfg):
    """Minibatch SGD with momentum, weight decay, and drop-on-plateau lr.

    Shuffles per epoch from cfg.seed, tracks validation accuracy after each
    epoch (training accuracy when val is None), drops the learning rate by
    cfg.lr_drop when accuracy gains stay below plateau_min_gain for
    plateau_patience consecutive epochs, and restores the best-accuracy
    parameters before returning. Deterministic given the seed.
    """
    rng = as_rng(cfg.seed)
    eval_set = val if val is not None else train
    grads_fn = _param_grads_linear if isinstance(model, LinearClassifier) else _param_grads_mlp

    def snapshot():
        return [p.copy() for p in _get_params(model)]

    def accuracy():
        pred = model.predict(eval_set.inputs)
        return float(np.mean(pred == eval_set.labels))

    lr = float(cfg.lr)
    velocity = None
    best_acc = accuracy()
    best_params = snapshot()
    anchor, stall = best_acc, 0
    history = []
    N = len(train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(N)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = train.inputs[idx]
            yb = train.labels[idx].astype(float) if isinstance(model, LinearClassifier) \
                else train.labels[idx]
            try:
                loss, grads = grads_fn(model, xb, yb)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"diverged at epoch {epoch}: {exc}") from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
            epoch_loss += loss
            batches += 1
            if isinstance(model, LinearClassifier):
                gw, gb = grads
                upd_w = gw + cfg.weight_decay * model.w
                upd_b = np.atleast_1d(gb)
                if velocity is None:
                    velocity = [np.zeros_like(model.w), np.zeros(1)]
                velocity[0] = cfg.momentum * velocity[0] - lr * upd_w
                velocity[1] = cfg.momentum * velocity[1] - lr * upd_b
                model.w = model.w + velocity[0]
                model.b = float(model.b + velocity[1][0])
            else:
                params = _get_params(model)
                if velocity is None:
                    velocity = [np.zeros_like(p) for p in params]
                for j, (p, g) in enumerate(zip(params, grads)):
                    velocity[j] = cfg.momentum * velocity[j] - lr * (g + cfg.weight_decay * p)
                    p += velocity[j]
        try:
            acc = accuracy()
        except FloatingPointError as exc:
            raise TrainingDiverged(f"diverged at epoch {epoch}: {exc}") from exc
        history.append({"epoch": epoch, "loss": epoch_loss / max(batches, 1),
                        "accuracy": acc, "lr": lr})
        if acc > best_acc:
            best_acc = acc
            best_params = snapshot()
        if acc >= anchor + cfg.plateau_min_gain:
            anchor, stall = acc, 0
        else:
            stall += 1
            if stall >= cfg.plateau_patience:
                lr *= cfg.lr_drop
                stall = 0
    _set_params(model, best_params)
    return TrainResult(best_val_acc=best_acc, final_val_acc=accuracy(),
                       epochs_run=cfg.epochs, history=history)


# ---------------------------------------------------------------------------
# checkpoints

def save_model(model, path):
    """Write a classifier to an .npz checkpoint (byte-deterministic)."""
    if isinstance(model, LinearClassifier):
        np.savez(path, kind=np.array("linear"), w=model.w, b=np.array([model.b]))
        return
    if isinstance(model, MlpClassifier):
        arrays = {"kind": np.array("mlp"),
                  "n_layers": np.array([len(model.weights)])}
        for i, (W, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)
        return
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_model(path):
    """Inverse of save_model."""
    with np.load(path, allow_pickle=False) as z:
        kind = str(z["kind"])
        if kind == "linear":
            return LinearClassifier(w=z["w"], b=float(z["b"][0]))
        if kind == "mlp":
            n = int(z["n_layers"][0])
            ws = [z[f"W{i}"] for i in range(n)]
            bs = [z[f"b{i}"] for i in range(n)]
            return MlpClassifier(weights=ws, biases=bs)
    raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
