"""Dynamic sample sieve: alternate confidence-regularized SGD epochs with
per-sample keep/drop decisions against the closed-form threshold."""
from dataclasses import dataclass, field, replace

import numpy as np

from . import loss as L
from .datagen import corrupt, load_dataset, make_blobs
from .errors import TrainingDiverged
from .metrics import loss_histogram, sieve_report, test_accuracy
from .model import backward, forward, init_classifier, sgd_step

METRIC_COLUMNS = ["epoch", "phase", "beta", "lr", "num_selected", "precision", "recall", "f_score",
                  "train_loss", "test_acc"]


@dataclass
class SieveState:
    v: np.ndarray
    epoch: int = 0
    beta: float = 0.0
    thresholds: np.ndarray | None = None
    history: list = field(default_factory=list)

    @classmethod
    def initial(cls, num_samples):
        return cls(np.ones(num_samples, dtype=bool))

    @property
    def clean_indices(self):
        return np.flatnonzero(self.v)

    @property
    def corrupted_indices(self):
        return np.flatnonzero(~self.v)


def regularized_epoch(model, data, state, prior, opt, *, rng, velocity=None, lr=None, normalize="selected"):
    """One SGD pass over ``sum_n v_n [CE(f(x_n), y~_n) + l_CR(f(x_n))]``.

    Batch gradients are divided by the number of kept samples in the batch
    (``normalize="selected"``) or by the batch size (``"batch"``). Batches
    without a kept sample are skipped, so an all-zero ``v`` leaves the model
    untouched. Returns ``(model, velocity, mean regularized loss over kept samples)``.
    """
    x = data.features
    y = np.asarray(data.noisy_labels)
    v = np.asarray(state.v, dtype=float)
    velocity = np.zeros_like(model.theta) if velocity is None else velocity
    total, count = 0.0, 0.0
    order = rng.permutation(len(data))
    for start in range(0, len(order), opt.batch_size):
        idx = order[start:start + opt.batch_size]
        w = v[idx]
        kept = w.sum()
        if kept == 0:
            continue
        probs = forward(model, x[idx])
        per_sample = L.cross_entropy(probs, y[idx]) + L.cr_term(probs, prior, state.beta)
        if not np.all(np.isfinite(per_sample)):
            raise TrainingDiverged(f"non-finite loss at epoch {state.epoch}")
        total += float(w @ per_sample)
        count += kept
        denom = kept if normalize == "selected" else len(idx)
        g = L.cross_entropy_grad(probs, y[idx]) + L.cr_term_grad(probs, prior, state.beta)
        grad = backward(model, x[idx], g * (w / denom)[:, None])
        model, velocity = sgd_step(model, grad, opt, velocity, lr)
    return model, velocity, (total / count if count else float("nan"))


def sieve_epoch(model, data, state, prior):
    """Recompute every v_n from the current model (no memory of earlier v).

    The model is only read, which makes it the gradient-free snapshot used
    for the thresholds. Raises ``AssertionError`` if a sample whose noisy
    label gets probability above 1/K is dropped (see ``L.better_than_random``).
    """
    probs = forward(model, data.features)
    y = np.asarray(data.noisy_labels)
    thresholds = L.sieve_threshold(probs, prior, state.beta)
    v = L.sieve_decision(probs, y, prior, state.beta)
    better = L.better_than_random(probs, y)
    if np.any(better & ~v):
        bad = np.flatnonzero(better & ~v)
        raise AssertionError(f"better-than-random samples sieved out: {bad[:10].tolist()}")
    return replace(state, v=v, thresholds=thresholds, history=list(state.history))


def build_datasets(cfg):
    """Clean train/test data and the corrupted training set for a config.

    Returns ``(train, test, noise_spec)``; ``test`` is ``None`` when the
    config asks for no test samples.
    """
    d = cfg.data
    if d.source == "file":
        train, spec = load_dataset(d.path, d.sidecar)
        test = None
        if d.test_path:
            test, _ = load_dataset(d.test_path)
        return train, test, spec
    clean = make_blobs(d.num_samples, d.num_classes, d.dim, d.separation, cfg.seeds.data)
    test = None
    if d.num_test:
        test = make_blobs(d.num_test, d.num_classes, d.dim, d.separation, cfg.seeds.data, split="test")
    n = cfg.noise
    train, spec = corrupt(clean, n.kind, n.epsilon, cfg.seeds.noise, n.include_true_label)
    return train, test, spec


@dataclass
class CoresResult:
    model: object
    state: SieveState
    rows: list
    prior: L.NoisyPrior
    velocity: np.ndarray
    histograms: dict = field(default_factory=dict)


def _train_rngs(seed):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def run_cores(data, cfg, test_data=None, stop_after=None):
    """Warm-up, beta ramp and per-epoch sieving; returns a :class:`CoresResult`.

    ``stop_after`` ends training after that epoch (inclusive), which is how
    the consistency phase obtains the split at its chosen epoch.
    """
    init_rng, order_rng = _train_rngs(cfg.seeds.train)
    model = init_classifier(cfg.model.arch, data.dim, data.num_classes, cfg.model.hidden, init_rng)
    prior = L.NoisyPrior.from_labels(data.noisy_labels, data.num_classes)
    schedule = cfg.beta_schedule()
    opt = cfg.optimizer
    state = SieveState.initial(len(data))
    velocity = np.zeros_like(model.theta)
    last = opt.epochs - 1 if stop_after is None else stop_after
    rows, hists = [], {}
    for epoch in range(last + 1):
        state.epoch = epoch
        state.beta = L.beta_at(schedule, epoch)
        lr = opt.lr_at(epoch)
        model, velocity, train_loss = regularized_epoch(
            model, data, state, prior, opt, rng=order_rng, velocity=velocity, lr=lr,
            normalize=cfg.schedule.normalize)
        if epoch >= cfg.sieve_start:
            state = sieve_epoch(model, data, state, prior)
        rep = sieve_report(state.v, data.clean_labels, data.noisy_labels)
        state.history.append(rep)
        rows.append({
            "epoch": epoch, "phase": "sieve", "beta": state.beta, "lr": lr,
            "num_selected": rep.num_selected, "precision": rep.precision, "recall": rep.recall,
            "f_score": rep.f_score, "train_loss": train_loss,
            "test_acc": test_accuracy(model, test_data) if test_data is not None else None,
        })
        if epoch in cfg.schedule.loss_hist_epochs:
            hists[epoch] = loss_histogram(model, data, prior, state.beta)
    return CoresResult(model, state, rows, prior, velocity, hists)
