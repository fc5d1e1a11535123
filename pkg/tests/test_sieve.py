from dataclasses import replace

import numpy as np
import pytest

from coresieve import loss as L
from coresieve.config import RunConfig
from coresieve.datagen import LabeledDataset, make_blobs
from coresieve.metrics import loss_histogram, sieve_report
from coresieve.model import Classifier, OptimizerConfig, backward, forward, init_classifier, sgd_step
from coresieve.sieve import SieveState, build_datasets, regularized_epoch, run_cores, sieve_epoch


def _noisy_blobs(n=400, k=3, dim=4, eps=0.3, seed=0):
    d = make_blobs(n, k, dim, 4.0, seed=seed)
    rng = np.random.default_rng(seed + 100)
    return d.with_noisy_labels(np.where(rng.random(n) < eps, (d.clean_labels + 1) % k, d.clean_labels))


def test_all_dropped_leaves_model_unchanged():
    d = _noisy_blobs()
    m = init_classifier("mlp", d.dim, 3, 8, np.random.default_rng(0))
    m = m.with_theta(m.theta + 0.1)
    state = replace(SieveState.initial(len(d)), v=np.zeros(len(d), bool), beta=2.0)
    prior = L.NoisyPrior.from_labels(d.noisy_labels, 3)
    m2, vel, loss = regularized_epoch(m, d, state, prior, OptimizerConfig(), rng=np.random.default_rng(1))
    np.testing.assert_array_equal(m2.theta, m.theta)
    assert np.all(vel == 0) and np.isnan(loss)


def test_beta_zero_matches_plain_ce_training():
    d = _noisy_blobs()
    opt = OptimizerConfig(batch_size=32)
    m0 = init_classifier("mlp", d.dim, 3, 8, np.random.default_rng(0))
    state = SieveState.initial(len(d))
    prior = L.NoisyPrior.from_labels(d.noisy_labels, 3)
    m1, _, _ = regularized_epoch(m0, d, state, prior, opt, rng=np.random.default_rng(5))
    # reference: plain mean-CE mini-batch SGD with the same shuffling
    m, vel = m0, np.zeros_like(m0.theta)
    order = np.random.default_rng(5).permutation(len(d))
    for s in range(0, len(d), 32):
        idx = order[s:s + 32]
        p = forward(m, d.features[idx])
        g = backward(m, d.features[idx], L.cross_entropy_grad(p, d.noisy_labels[idx]) / len(idx))
        m, vel = sgd_step(m, g, opt, vel)
    np.testing.assert_array_equal(m1.theta, m.theta)


def test_training_loss_trend_on_separable_blobs():
    d = make_blobs(1000, 3, 5, 8.0, seed=0)
    m = init_classifier("linear", 5, 3)
    state = SieveState.initial(len(d))
    prior = L.NoisyPrior.from_labels(d.noisy_labels, 3)
    opt = OptimizerConfig(learning_rate=0.1)
    rng, vel, losses = np.random.default_rng(0), None, []
    for epoch in range(5):
        m, vel, loss = regularized_epoch(m, d, state, prior, opt, rng=rng, velocity=vel)
        losses.append(loss)
    assert all(b <= a * 1.05 for a, b in zip(losses, losses[1:]))


def test_uniform_model_sieves_everything_out():
    d = _noisy_blobs()
    state = sieve_epoch(Classifier("linear", d.dim, 3), d, SieveState.initial(len(d)),
                        L.NoisyPrior.from_labels(d.noisy_labels, 3))
    assert not state.v.any()


def test_bayes_optimal_model_divides_perfectly():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 4, 300)
    yt = np.where(rng.random(300) < 0.4, rng.integers(0, 4, 300), y)
    d = LabeledDataset(np.eye(4)[y], y, yt, 4)
    m = Classifier("linear", 4, 4)
    m.unpack()["W"][...] = 40 * np.eye(4)
    state = sieve_epoch(m, d, SieveState.initial(300), L.NoisyPrior.from_labels(yt, 4))
    assert np.array_equal(state.v, y == yt)
    assert sieve_report(state.v, y, yt).f_score == 1.0


def test_retention_and_idempotence_for_random_models():
    d = _noisy_blobs(k=4)
    prior = L.NoisyPrior.from_labels(d.noisy_labels, 4)
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = Classifier("mlp", d.dim, 4, 6, rng.normal(size=Classifier("mlp", d.dim, 4, 6).num_params))
        s1 = sieve_epoch(m, d, SieveState.initial(len(d)), prior)
        s2 = sieve_epoch(m, d, s1, prior)
        p = forward(m, d.features)[np.arange(len(d)), d.noisy_labels]
        assert np.all(s1.v[p > 0.25])
        assert np.array_equal(s1.v, s2.v)


def test_zero_noise_confident_model_keeps_everything():
    d = make_blobs(300, 3, 3, 3.0, seed=0)
    y = d.clean_labels
    d = LabeledDataset(np.eye(3)[y], y, y, 3)
    m = Classifier("linear", 3, 3)
    m.unpack()["W"][...] = 2 * np.eye(3)
    assert sieve_epoch(m, d, SieveState.initial(300), L.NoisyPrior.from_labels(y, 3)).v.all()


def test_zero_noise_run_keeps_nearly_everything(small_cfg):
    cfg = RunConfig.from_dict({**small_cfg.to_dict(), "noise": {"kind": "symmetric", "epsilon": 0.0},
                               "data": {**small_cfg.to_dict()["data"], "separation": 8.0}})
    train, test, _ = build_datasets(cfg)
    res = run_cores(train, cfg, test)
    assert res.state.v.mean() >= 0.99


def test_all_corrupted_run_completes(small_cfg):
    train, test, _ = build_datasets(small_cfg)
    bad = train.with_noisy_labels((train.clean_labels + 1) % train.num_classes)
    res = run_cores(bad, small_cfg, test)
    assert len(res.rows) == small_cfg.optimizer.epochs
    assert res.rows[-1]["precision"] == 0.0


def test_run_rows_and_schedule(small_cfg):
    train, test, _ = build_datasets(small_cfg)
    res = run_cores(train, small_cfg, test)
    assert [r["epoch"] for r in res.rows] == list(range(20))
    assert [r["beta"] for r in res.rows][:3] == [0.0, 0.0, 0.0]
    assert res.rows[-1]["beta"] == 2.0
    # nothing is sieved before the activation epoch
    assert all(r["num_selected"] == len(train) for r in res.rows[:small_cfg.sieve_start])
    assert len(res.state.history) == 20


def test_run_is_deterministic(small_cfg):
    train, test, _ = build_datasets(small_cfg)
    a = run_cores(train, small_cfg, test)
    b = run_cores(train, small_cfg, test)
    np.testing.assert_array_equal(a.model.theta, b.model.theta)
    assert a.rows == b.rows


@pytest.fixture(scope="module")
def forty_percent_runs():
    """Default-config CR and CE runs (instance noise 0.4) with loss histograms at the last epoch."""
    base = {"data": {"num_test": 0}, "schedule": {"loss_hist_epochs": [49]}}
    out = {}
    for name, beta in (("cr", None), ("ce", 0.0)):
        d = {**base, "schedule": {**base["schedule"], "beta_max": beta}}
        cfg = RunConfig.from_dict(d)
        train, _, _ = build_datasets(cfg)
        out[name] = (train, run_cores(train, cfg))
    return out


def test_loss_histogram_medians_have_opposite_sign(forty_percent_runs):
    train, res = forty_percent_runs["cr"]
    rows = np.array([(c, k) for _, c, k in res.histograms[49]])
    assert np.median(rows[rows[:, 1] == 1, 0]) < 0 < np.median(rows[rows[:, 1] == 0, 0])


def test_loss_histogram_separation_cr_beats_ce(forty_percent_runs):
    def clean_below_zero(key):
        train, res = forty_percent_runs[key]
        rows = np.array([(c, k) for _, c, k in res.histograms[49]])
        clean = rows[rows[:, 1] == 1, 0]
        corrupted = rows[rows[:, 1] == 0, 0]
        return np.mean(clean < 0), np.mean(corrupted < 0)

    cr_clean, cr_bad = clean_below_zero("cr")
    ce_clean, ce_bad = clean_below_zero("ce")
    assert cr_clean > 0.9
    # CE lets more corrupted samples below the threshold
    assert cr_bad < ce_bad


def test_loss_histogram_consistent_with_final_flags(forty_percent_runs):
    train, res = forty_percent_runs["cr"]
    centered = np.array([c for _, c, _ in loss_histogram(res.model, train, res.prior, 2.0)])
    np.testing.assert_array_equal(centered < 0, res.state.v)
