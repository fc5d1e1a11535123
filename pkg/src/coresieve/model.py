"""Softmax-linear and one-hidden-layer MLP classifiers with hand-written backprop.

Parameters live in one flat float64 vector so the optimizer, finite-difference
checks and checkpoints all operate on the same object.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TrainingDiverged


@dataclass
class Classifier:
    arch: str
    input_dim: int
    num_classes: int
    hidden: int = 0
    theta: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.arch not in ("linear", "mlp"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.arch == "mlp" and self.hidden < 1:
            raise ValueError("mlp needs hidden >= 1")
        if self.arch == "linear":
            self.hidden = 0
        if self.theta is None:
            self.theta = np.zeros(self.num_params)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.num_params,):
            raise DimensionMismatch(f"theta has shape {self.theta.shape}, expected ({self.num_params},)")

    @property
    def shapes(self):
        s, k, h = self.input_dim, self.num_classes, self.hidden
        if self.arch == "linear":
            return [("W", (s, k)), ("b", (k,))]
        return [("W1", (s, h)), ("b1", (h,)), ("W2", (h, k)), ("b2", (k,))]

    @property
    def num_params(self):
        return sum(int(np.prod(shape)) for _, shape in self.shapes)

    def unpack(self, theta=None):
        """Views into ``theta`` keyed by layer name."""
        theta = self.theta if theta is None else theta
        out, i = {}, 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            out[name] = theta[i:i + n].reshape(shape)
            i += n
        return out

    def copy(self):
        return Classifier(self.arch, self.input_dim, self.num_classes, self.hidden, self.theta.copy())

    def with_theta(self, theta):
        return Classifier(self.arch, self.input_dim, self.num_classes, self.hidden, theta)


def init_classifier(arch, input_dim, num_classes, hidden=0, rng=None):
    """He-normal hidden weights, zero output layer (uniform initial predictions)."""
    model = Classifier(arch, input_dim, num_classes, hidden)
    if arch == "mlp":
        rng = np.random.default_rng(rng)
        p = model.unpack()
        p["W1"][...] = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=p["W1"].shape)
    return model


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim or x.ndim not in (1, 2):
        raise DimensionMismatch(f"expected features of length {model.input_dim}, got shape {x.shape}")
    return x


def _hidden(model, X):
    p = model.unpack()
    pre = X @ p["W1"] + p["b1"]
    return pre, np.maximum(pre, 0.0)


def logits(model, x):
    x = _check_input(model, x)
    X = np.atleast_2d(x)
    p = model.unpack()
    if model.arch == "linear":
        z = X @ p["W"] + p["b"]
    else:
        _, h = _hidden(model, X)
        z = h @ p["W2"] + p["b2"]
    return z[0] if x.ndim == 1 else z


def forward(model, x):
    """Class probabilities for one feature vector or a batch."""
    return softmax(logits(model, x))


def backward(model, X, loss_grad_at_probs):
    """Gradient of ``sum_n <g_n, f(x_n)>`` with respect to theta.

    ``loss_grad_at_probs`` holds dL/dp per sample; pass already-weighted rows
    to get the gradient of a weighted or averaged batch loss.
    """
    X = np.atleast_2d(_check_input(model, X))
    g = np.atleast_2d(np.asarray(loss_grad_at_probs, dtype=float))
    if g.shape != (X.shape[0], model.num_classes):
        raise DimensionMismatch(f"loss gradient has shape {g.shape}, expected {(X.shape[0], model.num_classes)}")
    probs = np.atleast_2d(forward(model, X))
    # softmax Jacobian-vector product
    dz = probs * (g - (g * probs).sum(axis=1, keepdims=True))
    return backward_logits(model, X, dz)


def backward_logits(model, X, dz):
    """Gradient of ``sum_n <dz_n, z(x_n)>`` with respect to theta."""
    X = np.atleast_2d(X)
    p = model.unpack()
    grad = np.zeros_like(model.theta)
    gp = model.unpack(grad)
    if model.arch == "linear":
        gp["W"][...] = X.T @ dz
        gp["b"][...] = dz.sum(axis=0)
    else:
        pre, h = _hidden(model, X)
        gp["W2"][...] = h.T @ dz
        gp["b2"][...] = dz.sum(axis=0)
        dh = (dz @ p["W2"].T) * (pre > 0)
        gp["W1"][...] = X.T @ dh
        gp["b1"][...] = dh.sum(axis=0)
    return grad


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 50
    lr_decay_epoch: int | None = None  # None: half the epoch budget
    lr_decay_factor: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def decay_epoch(self):
        return self.epochs // 2 if self.lr_decay_epoch is None else self.lr_decay_epoch

    def lr_at(self, epoch):
        if epoch >= self.decay_epoch:
            return self.learning_rate * self.lr_decay_factor
        return self.learning_rate


def sgd_step(model, grad, cfg, velocity, lr=None):
    """Heavy-ball SGD with L2 weight decay folded into the velocity.

    Returns a new model (the old parameter array is left untouched, so
    snapshots stay valid) and the new velocity.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != model.theta.shape or velocity.shape != model.theta.shape:
        raise DimensionMismatch("gradient/velocity shape does not match parameters")
    if not np.all(np.isfinite(grad)):
        raise TrainingDiverged("non-finite gradient")
    lr = cfg.learning_rate if lr is None else lr
    velocity = cfg.momentum * velocity + grad + cfg.weight_decay * model.theta
    theta = model.theta - lr * velocity
    if not np.all(np.isfinite(theta)):
        raise TrainingDiverged("non-finite parameters after update")
    return model.with_theta(theta), velocity


def save_checkpoint(model, path, epoch=None):
    """Length-prefixed JSON header followed by little-endian float64 parameters."""
    header = json.dumps({
        "arch": model.arch,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "num_params": model.num_params,
        "epoch": epoch,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(model.theta.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        theta = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    model = Classifier(header["arch"], header["input_dim"], header["num_classes"], header["hidden"], theta)
    return model, header
