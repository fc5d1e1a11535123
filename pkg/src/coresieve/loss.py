"""Per-sample losses used by the sieve and the consistency phase.

Every function accepts either a single probability vector of shape ``(K,)``
or a batch of shape ``(N, K)`` and broadcasts accordingly. All logarithms
are taken of ``max(p, P_FLOOR)`` so confident predictions stay finite.

The ``*_grad`` functions return derivatives with respect to the probability
vector; :func:`coresieve.model.backward` chains them through the softmax.
"""
from dataclasses import dataclass

import numpy as np

P_FLOOR = 1e-12

# Relative band around the sieve boundary inside which the two algebraic
# forms of the decision may legitimately round differently.
_TIE_RTOL = 64 * np.finfo(float).eps
RETENTION_RTOL = 1e-12


def _log(p):
    return np.log(np.maximum(p, P_FLOOR))


def _dlog(p):
    # d/dp ln(max(p, floor)); zero where the floor is active
    p = np.asarray(p, dtype=float)
    return np.where(p > P_FLOOR, 1.0 / np.maximum(p, P_FLOOR), 0.0)


def _take(probs, labels):
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim == 1:
        return probs[int(labels)]
    return np.take_along_axis(probs, labels.reshape(-1, 1).astype(int), axis=1)[:, 0]


@dataclass(frozen=True)
class NoisyPrior:
    """Marginal distribution of the noisy labels, P(Y~ = j)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("prior must be a vector of length K >= 2")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"prior must be non-negative and sum to 1, got {p}")
        object.__setattr__(self, "probs", p)

    @property
    def num_classes(self):
        return self.probs.size

    @classmethod
    def from_labels(cls, noisy_labels, num_classes):
        counts = np.bincount(np.asarray(noisy_labels, dtype=int), minlength=num_classes)
        return cls(counts / counts.sum())

    @classmethod
    def uniform(cls, num_classes):
        return cls(np.full(num_classes, 1.0 / num_classes))


@dataclass(frozen=True)
class BetaSchedule:
    """Warm-up with beta = 0, then a linear ramp to ``beta_max``, then a plateau."""

    warmup_epochs: int = 5
    ramp_epochs: int = 15
    beta_max: float = 2.0

    def __post_init__(self):
        if self.warmup_epochs < 0 or self.ramp_epochs < 0:
            raise ValueError("warmup_epochs and ramp_epochs must be >= 0")
        if self.beta_max < 0:
            raise ValueError("beta_max must be >= 0")

    @property
    def ramp_end(self):
        return self.warmup_epochs + self.ramp_epochs


def beta_at(schedule, epoch):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < schedule.warmup_epochs:
        return 0.0
    if schedule.ramp_epochs == 0 or epoch >= schedule.ramp_end:
        return float(schedule.beta_max)
    return schedule.beta_max * (epoch - schedule.warmup_epochs) / schedule.ramp_epochs


def default_beta_max(num_classes):
    """2 for up to ten classes, growing linearly (0.2 K) beyond that."""
    return 2.0 if num_classes <= 10 else 0.2 * num_classes


def cross_entropy(probs, label):
    return -_log(_take(probs, label))


def cross_entropy_grad(probs, label):
    probs = np.asarray(probs, dtype=float)
    onehot = np.zeros_like(probs)
    if probs.ndim == 1:
        onehot[int(label)] = 1.0
    else:
        onehot[np.arange(len(probs)), np.asarray(label, dtype=int)] = 1.0
    return -onehot * _dlog(probs)


def cr_term(probs, prior, beta):
    """Confidence regularizer: ``beta * sum_j P(Y~=j) ln f[j]`` (non-positive)."""
    return beta * (_log(probs) @ prior.probs)


def cr_term_grad(probs, prior, beta):
    return beta * prior.probs * _dlog(probs)


def mean_cross_entropy(probs):
    """Average CE over all K candidate labels, ``-(1/K) sum_y ln f[y]``."""
    return -_log(probs).mean(axis=-1)


def sieve_threshold(probs, prior, beta):
    return mean_cross_entropy(probs) + cr_term(probs, prior, beta)


def sieve_margin(probs, noisy_label, prior, beta):
    """Regularized loss minus threshold; negative means the sample is kept."""
    loss = cross_entropy(probs, noisy_label) + cr_term(probs, prior, beta)
    return loss - sieve_threshold(probs, prior, beta)


def sieve_decision(probs, noisy_label, prior, beta):
    """Sieve flag v: True keeps the sample as clean.

    Evaluates the full regularized comparison and the reduced form
    ``-ln f[y~] < -(1/K) sum_y ln f[y]`` (the regularizer cancels) and checks
    that they agree away from floating-point ties. Equality is sieved out.
    """
    ce = cross_entropy(probs, noisy_label)
    cr = cr_term(probs, prior, beta)
    mean_ce = mean_cross_entropy(probs)
    full = (ce + cr) < (mean_ce + cr)
    reduced = ce < mean_ce
    scale = np.abs(ce) + np.abs(mean_ce) + np.abs(cr) + 1.0
    decisive = np.abs(ce - mean_ce) > _TIE_RTOL * scale
    if np.any((full != reduced) & decisive):
        raise AssertionError("full and reduced sieve rules disagree")
    return full


def better_than_random(probs, noisy_label, rtol=RETENTION_RTOL):
    """``f[y~] > (1/K)(1 + rtol)``: the predictions the sieve must always keep.

    The small relative band excludes vectors that are uniform up to rounding,
    where the logarithms in the sieve comparison cannot resolve the order.
    """
    probs = np.asarray(probs, dtype=float)
    return _take(probs, noisy_label) > (1.0 + rtol) / probs.shape[-1]


def peer_loss(probs_n, label_n2):
    """The subtracted peer term ``l(f(x_n1), y~_n2)`` of the peer loss."""
    return cross_entropy(probs_n, label_n2)


def peer_loss_grad(probs_n, label_n2):
    return cross_entropy_grad(probs_n, label_n2)


def entropy_reg(probs):
    probs = np.asarray(probs, dtype=float)
    return -(probs * _log(probs)).sum(axis=-1)


def entropy_reg_grad(probs):
    probs = np.asarray(probs, dtype=float)
    # d/dp [-p ln max(p, floor)]
    return -(_log(probs) + probs * _dlog(probs))


def kl_consistency(probs_orig, probs_aug_detached):
    """KL(q || p) with q the gradient-stopped prediction on the augmented input.

    Summed in the form ``q ln(q/p) - q + p`` whose terms are individually
    non-negative; for normalised inputs this equals the usual KL. ``0 ln 0 = 0``.
    """
    q = np.asarray(probs_aug_detached, dtype=float)
    p = np.maximum(np.asarray(probs_orig, dtype=float), P_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        qlogq = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    return (qlogq - q * np.log(p) - q + p).sum(axis=-1)


def kl_consistency_grad(probs_orig, probs_aug_detached):
    """Gradient with respect to ``probs_orig`` only."""
    p = np.asarray(probs_orig, dtype=float)
    q = np.asarray(probs_aug_detached, dtype=float)
    return np.where(p > P_FLOOR, 1.0 - q / np.maximum(p, P_FLOOR), 0.0)


# Binary forms used to compare the two regularizers as functions of p = P(class 1).

def binary_cr(p):
    return np.log(p) + np.log1p(-p)


def binary_er(p):
    return -(p * np.log(p) + (1 - p) * np.log1p(-p))


def binary_cr_slope(p):
    return 1.0 / p - 1.0 / (1.0 - p)


def binary_er_slope(p):
    return np.log(1.0 / p - 1.0)
