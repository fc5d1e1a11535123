"""Exact oracles on enumerable worlds.

Every quantity here is a finite sum over feature atoms, clean labels and
noisy labels, so identities can be checked to rounding error instead of
sampling error. Prediction tables are ``M x K`` arrays holding f(x_m).
"""
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .datagen import DiscreteWorld
from .errors import DecouplingMismatch, InvalidWorld
from .loss import cross_entropy

DECOUPLING_TOL = 1e-9
MAX_ATOMS = 16
MAX_CLASSES = 8


@dataclass
class DecoupledTerms:
    lhs: float
    term1: float
    term2: float
    term3: float
    T_underline: float
    delta_bar: float
    delta: np.ndarray
    U: np.ndarray
    row_T: np.ndarray

    @property
    def residual(self):
        return self.lhs - (self.term1 + self.term2 + self.term3)


@dataclass
class BetaInterval:
    lower: float
    upper: float
    # same minimum with the diagonal-difference term T_jj - T_ii removed;
    # see per_atom_upper_bound
    upper_per_atom: float = math.inf

    @property
    def feasible(self):
        return self.lower <= self.upper

    def contains(self, beta):
        return self.lower <= beta <= self.upper


def _check_world(world):
    if not isinstance(world, DiscreteWorld):
        raise InvalidWorld("expected a DiscreteWorld")
    world.validate()
    if world.num_atoms > MAX_ATOMS or world.num_classes > MAX_CLASSES:
        raise InvalidWorld(f"world too large to enumerate (M <= {MAX_ATOMS}, K <= {MAX_CLASSES})")


def _check_table(world, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (world.num_atoms, world.num_classes):
        raise InvalidWorld(f"prediction table must be {world.num_atoms} x {world.num_classes}")
    if np.any(f < 0) or np.any(np.abs(f.sum(axis=1) - 1) > 1e-9):
        raise InvalidWorld("prediction table rows must be probability vectors")
    return f


def loss_table(f):
    """``ell[m, j] = CE(f(x_m), j)`` with the package-wide probability floor."""
    f = np.asarray(f, dtype=float)
    k = f.shape[1]
    return np.stack([cross_entropy(f, np.full(len(f), j)) for j in range(k)], axis=1)


def exact_regularized_risk(world, f, beta):
    """E over (X, Y, Y~) of CE(f(X), Y~) + l_CR(f(X)), by enumeration."""
    _check_world(world)
    ell = loss_table(_check_table(world, f))
    noisy = world.noisy_given_x()
    prior = world.noisy_prior()
    return float(world.p_x @ (noisy * ell).sum(axis=1) - beta * world.p_x @ (ell @ prior))


def decouple(world, f, beta):
    """Split the exact regularized risk into its three additive terms.

    Raises :class:`DecouplingMismatch` if the terms fail to sum to the exact
    risk within ``DECOUPLING_TOL``.
    """
    _check_world(world)
    f = _check_table(world, f)
    ell = loss_table(f)
    k = world.num_classes
    py = world.class_prior()
    prior = world.noisy_prior()
    T = world.expected_transition()
    t_under = float(np.diag(T).min())
    delta = np.diag(T) - t_under
    delta_bar = float(delta @ py)
    U = world.transitions.copy()
    idx = np.arange(k)
    U[:, idx, idx] -= np.diag(T)
    # E[ell(f(X), j) | Y = i] for every (i, j)
    p_x_given_y = world.p_x[:, None] * world.p_y_given_x / py
    cond_loss = p_x_given_y.T @ ell
    clean_risk = float(py @ np.diag(cond_loss))
    term1 = t_under * clean_risk
    term2 = float((delta * py) @ np.diag(cond_loss)) if delta_bar > 0 else 0.0
    # sum_i sum_j P(Y=i) E_{X|Y=i}[(U_ij(X) - beta P(Y~=j)) ell(f(X), j)]
    weight = np.einsum("xi,xij->xij", world.p_x[:, None] * world.p_y_given_x, U - beta * prior[None, None, :])
    term3 = float(np.einsum("xij,xj->", weight, ell))
    lhs = exact_regularized_risk(world, f, beta)
    terms = DecoupledTerms(lhs, term1, term2, term3, t_under, delta_bar, delta, U, T)
    if abs(terms.residual) > DECOUPLING_TOL:
        raise DecouplingMismatch(f"lhs - (term1 + term2 + term3) = {terms.residual:.3e}")
    return terms


def _u_matrix(world):
    T = world.expected_transition()
    U = world.transitions.copy()
    k = world.num_classes
    U[:, np.arange(k), np.arange(k)] -= np.diag(T)
    return U, T


def beta_interval(world):
    """Range of beta for which the robustness condition on the noisy risk holds.

    ``lower`` is the max of U_ij(x) / P(Y~=j) over all i, j and atoms;
    ``upper`` is the min over atoms and ordered pairs with
    P(Y~=i) > P(Y~=j) of (T_jj - T_ii + T_ii(x) - T_ij(x)) / (P(Y~=i) - P(Y~=j)),
    or +inf when no pair is ordered.
    """
    _check_world(world)
    prior = world.noisy_prior()
    if np.any(prior <= 0):
        raise InvalidWorld("every noisy label needs positive probability")
    U, T = _u_matrix(world)
    lower = float((U / prior[None, None, :]).max())
    upper = upper_atom = math.inf
    k = world.num_classes
    Tx = world.transitions
    for i, j in itertools.product(range(k), repeat=2):
        gap = prior[i] - prior[j]
        if gap <= 0:
            continue
        margin = Tx[:, i, i] - Tx[:, i, j]
        upper = min(upper, float(((T[j, j] - T[i, i] + margin) / gap).min()))
        upper_atom = min(upper_atom, float((margin / gap).min()))
    return BetaInterval(lower, upper, upper_atom)


def per_atom_upper_bound(world):
    """Largest beta keeping every atom's confident minimizer on its clean label.

    Moving the confident prediction at an atom of clean class i to class j
    raises the regularized risk by a positive multiple of
    ``T_ii(x) - T_ij(x) - beta (P(Y~=i) - P(Y~=j))``, so only this
    per-atom margin constrains beta from above; the ``T_jj - T_ii`` offset in
    :func:`beta_interval`'s upper bound is not part of it.
    """
    return beta_interval(world).upper_per_atom


def assumption2_check(world):
    """``T_ii(x) - T_ij(x) > T_ii - T_jj`` for all i != j and atoms.

    Returns ``(ok, witnesses)`` with witnesses the violating ``(i, j, m)`` triples.
    """
    _check_world(world)
    T = world.expected_transition()
    Tx = world.transitions
    k = world.num_classes
    witnesses = []
    for m in range(world.num_atoms):
        for i, j in itertools.permutations(range(k), 2):
            if not Tx[m, i, i] - Tx[m, i, j] > T[i, i] - T[j, j]:
                witnesses.append((i, j, m))
    return not witnesses, witnesses


def assumption1_check(world):
    """Clean labels are deterministic given the feature (one-hot P(Y|X))."""
    return bool(np.all(np.isclose(world.p_y_given_x.max(axis=1), 1.0)))


def label_shift_bound(world):
    """``min_{i,j} T_jj / (T_ii + T_jj)`` from the row-expected transition matrix."""
    _check_world(world)
    d = np.diag(world.expected_transition())
    ratio = d[None, :] / (d[:, None] + d[None, :])
    return float(ratio.min())


def variance_example(eps, l_max, l_min):
    """Per-sample loss variance of the clean-optimal classifier, clean vs noisy data.

    Clean: every loss equals ``l_min`` so the variance is 0. Noisy: a fraction
    ``eps`` of samples pays ``l_max`` (the regularizer adds a constant).
    """
    if not 0 <= eps <= 1 or l_max < l_min:
        raise ValueError("need 0 <= eps <= 1 and l_max >= l_min")
    return 0.0, eps * (1 - eps) * (l_max - l_min) ** 2


def variance_monte_carlo(eps, l_max, l_min, num_classes, draws, rng):
    """Simulate the per-sample regularized loss of the clean-optimal classifier.

    Returns ``(sample variance, standard error of that variance)``.
    """
    rng = np.random.default_rng(rng)
    l_cr = ((num_classes - 1) * l_max + l_min) / num_classes
    corrupted = rng.random(draws) < eps
    losses = np.where(corrupted, l_max, l_min) + l_cr
    var = losses.var(ddof=1)
    # SE of the sample variance: sqrt((m4 - var^2) / n)
    m4 = np.mean((losses - losses.mean()) ** 4)
    se = math.sqrt(max(m4 - var ** 2, 0.0) / draws)
    return float(var), se


def confident_table(labels, num_classes):
    return np.eye(num_classes)[np.asarray(labels, dtype=int)]


def brute_force_minimizer(world, beta):
    """Minimize the exact regularized risk over all K^M confident tables.

    Returns ``(labels, risk)``; ties resolve to the first table in
    lexicographic order.
    """
    _check_world(world)
    k, m = world.num_classes, world.num_atoms
    best, best_risk = None, math.inf
    for labels in itertools.product(range(k), repeat=m):
        r = exact_regularized_risk(world, confident_table(labels, k), beta)
        if r < best_risk:
            best, best_risk = np.array(labels), r
    return best, best_risk


def random_world(rng, num_atoms, num_classes, max_noise=0.6, deterministic_labels=True):
    """Random world: Dirichlet P(X), one-hot or Dirichlet P(Y|X), noisy T(x).

    Each T(x) row keeps a uniform(0, max_noise) share off the diagonal,
    spread by a Dirichlet draw. With ``deterministic_labels`` every class is
    assigned to at least one atom.
    """
    rng = np.random.default_rng(rng)
    m, k = num_atoms, num_classes
    p_x = rng.dirichlet(np.ones(m))
    if deterministic_labels:
        if m < k:
            raise InvalidWorld("need at least as many atoms as classes")
        labels = np.concatenate([np.arange(k), rng.integers(0, k, m - k)])
        rng.shuffle(labels)
        p_y = np.eye(k)[labels]
    else:
        p_y = rng.dirichlet(np.ones(k), size=m)
    T = np.empty((m, k, k))
    for x in range(m):
        for i in range(k):
            off = rng.dirichlet(np.ones(k - 1)) * rng.uniform(0, max_noise)
            row = np.insert(off, i, 0.0)
            row[i] = 1.0 - off.sum()
            T[x, i] = row
    return DiscreteWorld(rng.normal(size=(m, 2)), p_x, p_y, T)


def symmetric_world(num_classes, eps, num_atoms=None, p_x=None):
    """Feature-independent symmetric noise with one atom per class."""
    k = num_classes
    m = num_atoms or k
    p_x = np.full(m, 1.0 / m) if p_x is None else np.asarray(p_x, dtype=float)
    labels = np.arange(m) % k
    T = (1 - eps) * np.eye(k) + eps / (k - 1) * (1 - np.eye(k)) if k > 1 else np.eye(k)
    return DiscreteWorld(np.arange(m, dtype=float)[:, None], p_x, np.eye(k)[labels], np.repeat(T[None], m, axis=0))


def oracle_report(world, f=None, beta=1.0):
    """JSON-ready summary: decoupled terms, beta interval and label-ordering witnesses.

    Without ``f`` the Bayes-optimal table (clean posterior rows) is used.
    """
    f = world.p_y_given_x if f is None else f
    terms = decouple(world, f, beta)
    interval = beta_interval(world)
    ok, witnesses = assumption2_check(world)
    return {
        "world_hash": world.digest(),
        "beta": beta,
        "lhs": terms.lhs,
        "term1": terms.term1,
        "term2": terms.term2,
        "term3": terms.term3,
        "beta_lower": interval.lower,
        "beta_upper": _inf_str(interval.upper),
        "beta_upper_per_atom": _inf_str(interval.upper_per_atom),
        "beta_feasible": interval.feasible,
        "assumption2_ok": ok,
        "witnesses": [list(map(int, w)) for w in witnesses],
        "label_shift_bound": label_shift_bound(world),
    }


def _inf_str(x):
    return "inf" if math.isinf(x) else x


def dumps_report(report):
    return json.dumps(report, indent=1, sort_keys=True)
