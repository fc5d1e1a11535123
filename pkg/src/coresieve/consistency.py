"""Post-sieve training: CE on the kept samples, KL consistency on the dropped ones.

Labels of dropped samples are never read; those samples only contribute
through the KL between the live model on the original feature and a
start-of-epoch snapshot on a jittered copy of the feature.
"""
from dataclasses import dataclass

import numpy as np

from . import loss as L
from .errors import TrainingDiverged
from .metrics import sieve_report, test_accuracy
from .model import backward, forward, sgd_step
from .sieve import _train_rngs, run_cores

CONSISTENCY_COLUMNS = ["ce_loss", "kl_loss"]


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str = "gaussian_jitter"
    sigma_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind != "gaussian_jitter":
            raise ValueError(f"unsupported augmentation {self.kind!r}")
        if self.sigma_fraction < 0:
            raise ValueError("sigma_fraction must be >= 0")


def augment(x, spec, epoch, index, feature_std=None):
    """Gaussian jitter with per-dimension std ``sigma_fraction * feature_std``.

    The noise is a pure function of ``(spec.seed, epoch, index)``.
    """
    x = np.asarray(x, dtype=float)
    if spec.sigma_fraction == 0:
        return x.copy()
    std = np.ones_like(x) if feature_std is None else np.asarray(feature_std, dtype=float)
    rng = np.random.default_rng([spec.seed, epoch, index])
    return x + spec.sigma_fraction * std * rng.standard_normal(x.shape)


def augment_batch(X, indices, spec, epoch, feature_std=None):
    return np.stack([augment(x, spec, epoch, int(i), feature_std) for x, i in zip(X, indices)])


def consistency_epoch(model, data, v, spec, opt, *, rng, epoch, velocity=None, lr=None,
                      kl_weight=1.0, feature_std=None):
    """One pass of CE on kept samples plus weighted KL on dropped samples.

    Each mini-batch loss is ``(sum CE + kl_weight * sum KL) / batch size``.
    Returns ``(model, velocity, ce_part, kl_part)`` where the parts are the
    per-batch averages accumulated over the epoch (their sum is the epoch's
    training loss).
    """
    v = np.asarray(v, dtype=bool)
    n = len(data)
    keep = np.flatnonzero(v)
    # only kept samples have their noisy labels looked up
    labels = np.full(n, -1, dtype=np.int64)
    labels[keep] = data.noisy_labels[keep]
    snapshot = model.copy()
    x = data.features
    velocity = np.zeros_like(model.theta) if velocity is None else velocity
    ce_sum = kl_sum = 0.0
    batches = 0
    order = rng.permutation(n)
    for start in range(0, n, opt.batch_size):
        idx = order[start:start + opt.batch_size]
        kept, dropped = idx[v[idx]], idx[~v[idx]]
        grad = np.zeros_like(model.theta)
        ce_part = kl_part = 0.0
        if kept.size:
            p = forward(model, x[kept])
            ce = L.cross_entropy(p, labels[kept])
            ce_part = float(ce.sum()) / len(idx)
            grad += backward(model, x[kept], L.cross_entropy_grad(p, labels[kept]) / len(idx))
        if dropped.size and kl_weight > 0:
            q = forward(snapshot, augment_batch(x[dropped], dropped, spec, epoch, feature_std))
            p = forward(model, x[dropped])
            kl = L.kl_consistency(p, q)
            kl_part = kl_weight * float(kl.sum()) / len(idx)
            grad += backward(model, x[dropped], kl_weight * L.kl_consistency_grad(p, q) / len(idx))
        if not (np.isfinite(ce_part) and np.isfinite(kl_part)):
            raise TrainingDiverged(f"non-finite consistency loss at epoch {epoch}")
        if kl_part < -1e-12:
            raise AssertionError(f"negative KL {kl_part}")
        ce_sum += ce_part
        kl_sum += kl_part
        batches += 1
        model, velocity = sgd_step(model, grad, opt, velocity, lr)
    return model, velocity, ce_sum / batches, kl_sum / batches


def run_cores_star(data, cfg, test_data=None):
    """Sieve up to the split epoch, then train with the consistency objective.

    Training continues from the sieve-phase model; epochs keep counting so the
    learning-rate schedule is shared with a plain sieve run of equal budget.
    Returns the sieve-phase result and the full list of metric rows.
    """
    tau = cfg.split_epoch
    res = run_cores(data, cfg, test_data, stop_after=tau)
    v = res.state.v.copy()
    model, velocity = res.model, res.velocity
    rep = sieve_report(v, data.clean_labels, data.noisy_labels)
    c = cfg.consistency
    spec = AugmentationSpec(sigma_fraction=c.sigma_fraction, seed=cfg.seeds.train)
    feature_std = data.features.std(axis=0)
    _, order_rng = _train_rngs(cfg.seeds.train + 7919)
    rows = [dict(r, ce_loss=None, kl_loss=None) for r in res.rows]
    for epoch in range(tau + 1, tau + 1 + cfg.consistency_epochs):
        lr = cfg.optimizer.lr_at(epoch)
        model, velocity, ce_part, kl_part = consistency_epoch(
            model, data, v, spec, cfg.optimizer, rng=order_rng, epoch=epoch, velocity=velocity, lr=lr,
            kl_weight=c.kl_weight, feature_std=feature_std)
        rows.append({
            "epoch": epoch, "phase": "consistency", "beta": 0.0, "lr": lr,
            "num_selected": rep.num_selected, "precision": rep.precision, "recall": rep.recall,
            "f_score": rep.f_score, "train_loss": ce_part + kl_part,
            "test_acc": test_accuracy(model, test_data) if test_data is not None else None,
            "ce_loss": ce_part, "kl_loss": kl_part,
        })
    res.model = model
    return res, rows
