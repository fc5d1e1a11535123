"""Synthetic clean datasets and label-noise processes.

Three corruption processes are provided: symmetric flips, asymmetric
``i -> i+1 mod K`` flips, and the instance-dependent generator in which each
sample draws its own flip rate and spreads it over the wrong classes through a
random linear map of its features.
"""
import csv
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateClass, InvalidArgument, InvalidWorld

NOISE_KINDS = ("symmetric", "asymmetric", "instance")
FLIP_RATE_STD = 0.1


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    clean_labels: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    seed: int | None = None

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidArgument(f"features must be an N x S matrix with N, S >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("features contain non-finite values")
        if self.num_classes < 2:
            raise InvalidArgument("num_classes must be >= 2")
        object.__setattr__(self, "features", x)
        for name in ("clean_labels", "noisy_labels"):
            y = getattr(self, name)
            # keep ndarray subclasses (used by tests to audit label reads)
            y = y if isinstance(y, np.ndarray) and y.dtype.kind == "i" else np.asarray(y, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise InvalidArgument(f"{name} must have length {x.shape[0]}")
            if y.size and (np.asarray(y).min() < 0 or np.asarray(y).max() >= self.num_classes):
                raise InvalidArgument(f"{name} entries must lie in [0, {self.num_classes})")
            object.__setattr__(self, name, y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def is_clean(self):
        return np.asarray(self.clean_labels) == np.asarray(self.noisy_labels)

    def corruption_rate(self):
        return float(np.mean(~self.is_clean))

    def with_noisy_labels(self, noisy_labels):
        return replace(self, noisy_labels=np.asarray(noisy_labels, dtype=np.int64))


@dataclass
class NoiseSpec:
    kind: str
    epsilon: float
    include_true_label: bool = False
    W: np.ndarray | None = None
    flip_rates: np.ndarray | None = None
    seed: int | None = None
    standardized: bool = True

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidArgument(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        _check_epsilon(self.epsilon)
        if self.kind == "instance":
            if self.W is None or self.flip_rates is None:
                raise InvalidArgument("instance noise needs W and flip_rates")
            self.W = np.asarray(self.W, dtype=float)
            self.flip_rates = np.asarray(self.flip_rates, dtype=float)
            if np.any(self.flip_rates < 0) or np.any(self.flip_rates > 1):
                raise InvalidArgument("flip_rates must lie in [0, 1]")

    def to_dict(self):
        d = {"kind": self.kind, "epsilon": self.epsilon, "include_true_label": self.include_true_label,
             "seed": self.seed, "standardized": self.standardized}
        if self.W is not None:
            d["W"] = self.W.tolist()
            d["flip_rates"] = self.flip_rates.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["epsilon"], d.get("include_true_label", False), d.get("W"),
                   d.get("flip_rates"), d.get("seed"), d.get("standardized", True))


def _check_epsilon(epsilon):
    if not 0 <= epsilon < 1:
        raise InvalidArgument(f"epsilon must lie in [0, 1), got {epsilon}")


# -- clean data ---------------------------------------------------------------

def blob_centers(num_classes, dim, separation, seed):
    """Random Gaussian cluster means rescaled to a minimum pairwise distance of ``separation``."""
    rng = np.random.default_rng([seed, 0])
    centers = rng.normal(size=(num_classes, dim))
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    dmin = d[np.triu_indices(num_classes, 1)].min()
    return centers * (separation / dmin)


def make_blobs(num_samples, num_classes, dim, separation, seed, split="train"):
    """Class-balanced isotropic unit-variance Gaussian clusters.

    Cluster means depend only on ``seed``; ``split`` selects an independent
    sample stream so train and test sets share the same clusters.
    Counts differ by at most one between classes.
    """
    if num_samples < 1 or num_classes < 2 or dim < 1:
        raise InvalidArgument("num_samples, dim must be positive and num_classes >= 2")
    if num_samples < num_classes:
        raise InvalidArgument("num_samples must be >= num_classes")
    if not separation > 0:
        raise InvalidArgument("separation must be > 0")
    centers = blob_centers(num_classes, dim, separation, seed)
    stream = {"train": 1, "test": 2}.get(split)
    if stream is None:
        raise InvalidArgument(f"split must be 'train' or 'test', got {split!r}")
    rng = np.random.default_rng([seed, stream])
    labels = np.arange(num_samples) % num_classes
    rng.shuffle(labels)
    x = centers[labels] + rng.normal(size=(num_samples, dim))
    return LabeledDataset(x, labels, labels.copy(), num_classes, seed)


def standardize(features):
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (features - mu) / sd


# -- noise processes ----------------------------------------------------------

def apply_symmetric_noise(data, epsilon, include_true_label=False, seed=0):
    """Flip w.p. epsilon to a uniformly random other class (or any class if ``include_true_label``)."""
    _check_epsilon(epsilon)
    rng = np.random.default_rng(seed)
    n, k = len(data), data.num_classes
    y = np.asarray(data.clean_labels)
    flip = rng.random(n) < epsilon
    if include_true_label:
        target = rng.integers(0, k, n)
    else:
        target = (y + rng.integers(1, k, n)) % k
    return data.with_noisy_labels(np.where(flip, target, y))


def apply_asymmetric_noise(data, epsilon, seed=0):
    _check_epsilon(epsilon)
    rng = np.random.default_rng(seed)
    y = np.asarray(data.clean_labels)
    flip = rng.random(len(data)) < epsilon
    return data.with_noisy_labels(np.where(flip, (y + 1) % data.num_classes, y))


def truncated_normal(mean, std, size, rng, low=0.0, high=1.0):
    """Rejection sampling from Normal(mean, std^2) restricted to [low, high]."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        draw = rng.normal(mean, std, size=max(2 * (size - filled), 16))
        draw = draw[(draw >= low) & (draw <= high)]
        take = min(draw.size, size - filled)
        out[filled:filled + take] = draw[:take]
        filled += take
    return out


def instance_flip_distribution(features, labels, W, flip_rates):
    """Per-sample noisy-label distribution (rows of T(x) at the clean label).

    The clean-label logit is excluded from the softmax normalisation, the
    remaining mass is scaled to ``q_n`` and the clean entry is set to ``1 - q_n``.
    """
    labels = np.asarray(labels, dtype=int)
    z = features @ W
    rows = np.arange(len(labels))
    z[rows, labels] = -np.inf
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = flip_rates[:, None] * e / e.sum(axis=1, keepdims=True)
    p[rows, labels] = 1.0 - flip_rates
    return p


def apply_instance_noise(data, epsilon, seed=0, flip_rates=None, standardize_features=True):
    """Instance-dependent corruption.

    RNG consumption order: flip rates (rejection sampled), then W (S x K,
    row-major), then one uniform per sample for the categorical draw.
    Passing ``flip_rates`` skips the first step.
    """
    _check_epsilon(epsilon)
    rng = np.random.default_rng(seed)
    n, s, k = len(data), data.dim, data.num_classes
    if flip_rates is None:
        q = truncated_normal(epsilon, FLIP_RATE_STD, n, rng)
    else:
        q = np.asarray(flip_rates, dtype=float)
        if q.shape != (n,):
            raise InvalidArgument(f"flip_rates must have length {n}")
    W = rng.standard_normal((s, k))
    x = standardize(data.features) if standardize_features else data.features
    p = instance_flip_distribution(x, data.clean_labels, W, q)
    u = rng.random(n)
    cdf = np.cumsum(p, axis=1)
    noisy = (u[:, None] >= cdf[:, :-1]).sum(axis=1)
    spec = NoiseSpec("instance", epsilon, False, W, q, seed, standardize_features)
    return data.with_noisy_labels(noisy), spec


def corrupt(data, kind, epsilon, seed=0, include_true_label=False):
    """Dispatch on noise kind; returns ``(noisy dataset, NoiseSpec)``."""
    if kind == "symmetric":
        return apply_symmetric_noise(data, epsilon, include_true_label, seed), \
            NoiseSpec(kind, epsilon, include_true_label, seed=seed)
    if kind == "asymmetric":
        return apply_asymmetric_noise(data, epsilon, seed), NoiseSpec(kind, epsilon, seed=seed)
    if kind == "instance":
        return apply_instance_noise(data, epsilon, seed)
    raise InvalidArgument(f"noise kind must be one of {NOISE_KINDS}, got {kind!r}")


def empirical_transition(data):
    """Row i, column j: fraction of clean-class-i samples carrying noisy label j."""
    k = data.num_classes
    y, yt = np.asarray(data.clean_labels), np.asarray(data.noisy_labels)
    counts = np.zeros((k, k))
    np.add.at(counts, (y, yt), 1)
    totals = counts.sum(axis=1)
    if np.any(totals == 0):
        missing = np.flatnonzero(totals == 0).tolist()
        raise DegenerateClass(f"classes without clean samples: {missing}")
    return counts / totals[:, None]


# -- serialization ------------------------------------------------------------

def save_dataset(data, csv_path, sidecar_path=None, noise=None, extra=None):
    """Write ``feat_0..feat_{S-1}, clean_label, noisy_label`` CSV and an optional JSON sidecar."""
    header = [f"feat_{j}" for j in range(data.dim)] + ["clean_label", "noisy_label"]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y, yt in zip(data.features, np.asarray(data.clean_labels), np.asarray(data.noisy_labels)):
            w.writerow([repr(float(v)) for v in x] + [int(y), int(yt)])
    if sidecar_path is not None:
        meta = {"num_classes": data.num_classes, "seed": data.seed,
                "noise": None if noise is None else noise.to_dict()}
        meta.update(extra or {})
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")


def load_dataset(csv_path, sidecar_path=None, num_classes=None):
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    nfeat = sum(h.startswith("feat_") for h in header)
    if header[nfeat:] != ["clean_label", "noisy_label"]:
        raise InvalidArgument(f"unexpected dataset header in {csv_path}")
    arr = np.array(body, dtype=object)
    x = arr[:, :nfeat].astype(float)
    y = arr[:, nfeat].astype(np.int64)
    yt = arr[:, nfeat + 1].astype(np.int64)
    noise, seed = None, None
    if sidecar_path is not None:
        with open(sidecar_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        num_classes = meta["num_classes"]
        seed = meta.get("seed")
        if meta.get("noise"):
            noise = NoiseSpec.from_dict(meta["noise"])
    if num_classes is None:
        num_classes = int(max(y.max(), yt.max())) + 1
    return LabeledDataset(x, y, yt, num_classes, seed), noise


# -- exactly enumerable worlds ------------------------------------------------

@dataclass
class DiscreteWorld:
    """Finite joint distribution of (X, Y) with a transition matrix T(x) per atom.

    ``transitions[m, i, j] = P(Y~ = j | Y = i, X = x_m)``.
    """

    feature_atoms: np.ndarray
    p_x: np.ndarray
    p_y_given_x: np.ndarray
    transitions: np.ndarray
    tol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        self.p_x = np.asarray(self.p_x, dtype=float)
        self.p_y_given_x = np.asarray(self.p_y_given_x, dtype=float)
        self.transitions = np.asarray(self.transitions, dtype=float)
        m = self.p_x.size
        if self.feature_atoms is None:
            self.feature_atoms = np.arange(m, dtype=float)[:, None]
        self.feature_atoms = np.asarray(self.feature_atoms, dtype=float).reshape(m, -1)
        self.validate()

    @property
    def num_atoms(self):
        return self.p_x.size

    @property
    def num_classes(self):
        return self.p_y_given_x.shape[1]

    def validate(self):
        m = self.p_x.size
        if self.p_x.ndim != 1 or m < 1:
            raise InvalidWorld("p_x must be a non-empty vector")
        if self.p_y_given_x.ndim != 2 or self.p_y_given_x.shape[0] != m:
            raise InvalidWorld(f"p_y_given_x must be {m} x K")
        k = self.p_y_given_x.shape[1]
        if k < 2:
            raise InvalidWorld("need K >= 2 classes")
        if self.transitions.shape != (m, k, k):
            raise InvalidWorld(f"transitions must have shape {(m, k, k)}, got {self.transitions.shape}")
        for name, arr in (("p_x", self.p_x), ("p_y_given_x", self.p_y_given_x), ("transitions", self.transitions)):
            if not np.all(np.isfinite(arr)) or np.any(arr < -self.tol) or np.any(arr > 1 + self.tol):
                raise InvalidWorld(f"{name} entries must lie in [0, 1]")
        if abs(self.p_x.sum() - 1) > self.tol:
            raise InvalidWorld(f"p_x sums to {self.p_x.sum()}, not 1")
        bad = np.flatnonzero(np.abs(self.p_y_given_x.sum(axis=1) - 1) > self.tol)
        if bad.size:
            raise InvalidWorld(f"p_y_given_x row {int(bad[0])} does not sum to 1")
        bad = np.argwhere(np.abs(self.transitions.sum(axis=2) - 1) > self.tol)
        if bad.size:
            x, i = bad[0]
            raise InvalidWorld(f"transitions[{x}] row {i} does not sum to 1")
        if np.any(self.class_prior() <= 0):
            raise InvalidWorld("every class needs positive marginal probability")

    def class_prior(self):
        """P(Y = i)."""
        return self.p_x @ self.p_y_given_x

    def noisy_given_x(self):
        """P(Y~ = j | X = x_m), shape M x K."""
        return np.einsum("xi,xij->xj", self.p_y_given_x, self.transitions)

    def noisy_prior(self):
        """P(Y~ = j)."""
        return self.p_x @ self.noisy_given_x()

    def expected_transition(self):
        """T_ij = E[T_ij(X) | Y = i]."""
        p_x_given_y = self.p_x[:, None] * self.p_y_given_x / self.class_prior()
        return np.einsum("xi,xij->ij", p_x_given_y, self.transitions)

    def bayes_labels(self):
        return self.p_y_given_x.argmax(axis=1)

    def to_dict(self):
        return {"feature_atoms": self.feature_atoms.tolist(), "p_x": self.p_x.tolist(),
                "p_y_given_x": self.p_y_given_x.tolist(), "transitions": self.transitions.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d.get("feature_atoms"), d["p_x"], d["p_y_given_x"], d["transitions"])
        except KeyError as exc:
            raise InvalidWorld(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidWorld):
                raise
            raise InvalidWorld(f"malformed world: {exc}") from None

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]
