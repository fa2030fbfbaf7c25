"""Optimizer, splits, early stopping, training loop, ridge baseline."""

import numpy as np
import pytest

import neuroincept.autodiff as ad
from neuroincept.model import ModelConfig, NeuroInceptDecoder
from neuroincept.training import (SPLIT_GUARD_ROWS, AdamState, EarlyStopper,
                                  TrainConfig, TrainingError, adam_step, mse,
                                  ridge_baseline, ridge_predict,
                                  split_80_20, split_indices, split_random,
                                  train)


def make_linear_problem(rows=60, width=18, out=6, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, width))
    W = rng.normal(size=(width, out)) / np.sqrt(width)
    Y = X @ W + noise * rng.normal(size=(rows, out))
    return X, Y


# ---------------------------------------------------------------------------
# config and loss
# ---------------------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(split_ratio=1.5)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(split_mode="sideways")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate="fast")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)


def test_mse_hand_values():
    assert mse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert mse(np.array([3.0]), np.array([1.0])) == 4.0
    assert mse(np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros((2, 2))) == 1.0
    with pytest.raises(ValueError):
        mse(np.zeros(3), np.zeros(4))


def test_mse_matches_autodiff_loss(rng):
    p = rng.normal(size=(6, 4))
    t = rng.normal(size=(6, 4))
    assert abs(mse(p, t) - ad.mse(ad.param(p), t).value) <= 1e-15


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_first_step_closed_form():
    """t=1, g=0.5, lr=1e-3: bias correction makes mhat=g, vhat=g^2, so the
    update is -lr * g / (|g| + eps)."""
    p = ad.param(np.array([1.0]))
    state = AdamState([p])
    adam_step([p], [np.array([0.5])], state, t=1, lr=1e-3)
    expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8)
    assert abs(p.value[0] - expected) <= 1e-15


def test_adam_matches_reference_implementation(rng):
    """Two tensors, five steps, against an independent numpy transcription
    of the published update rule."""
    shapes = [(3, 2), (4,)]
    init = [rng.normal(size=s) for s in shapes]
    grads = [[rng.normal(size=s) for s in shapes] for _ in range(5)]

    params = [ad.param(v.copy()) for v in init]
    state = AdamState(params)
    for t, gs in enumerate(grads, start=1):
        adam_step(params, gs, state, t=t, lr=0.01)

    b1, b2, eps = 0.9, 0.999, 1e-8
    ref = [v.copy() for v in init]
    m = [np.zeros_like(v) for v in init]
    v2 = [np.zeros_like(v) for v in init]
    for t, gs in enumerate(grads, start=1):
        for i, g in enumerate(gs):
            m[i] = b1 * m[i] + (1 - b1) * g
            v2[i] = b2 * v2[i] + (1 - b2) * g * g
            mhat = m[i] / (1 - b1 ** t)
            vhat = v2[i] / (1 - b2 ** t)
            ref[i] = ref[i] - 0.01 * mhat / (np.sqrt(vhat) + eps)
    for p, r in zip(params, ref):
        assert np.max(np.abs(p.value - r)) <= 1e-14


def test_adam_converges_on_quadratic():
    w = ad.param(np.array([5.0]))
    state = AdamState([w])
    for t in range(1, 2001):
        g = 2.0 * (w.value - 3.0)
        adam_step([w], [g], state, t=t, lr=0.05)
    assert abs(w.value[0] - 3.0) < 1e-4


def test_adam_rejects_nonfinite_gradient():
    p = ad.param(np.array([1.0]))
    state = AdamState([p])
    with pytest.raises(TrainingError, match="non-finite"):
        adam_step([p], [np.array([np.nan])], state, t=1, lr=0.1)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def test_split_indices_guard_band():
    tr, va = split_indices(1000)
    assert (tr.start, tr.stop) == (0, 800)
    assert (va.start, va.stop) == (840, 1000)
    assert SPLIT_GUARD_ROWS == 40


def test_split_80_20_no_context_overlap():
    """No validation row may sit within guard distance of the train side."""
    X = np.arange(500.0)[:, None]
    Y = X.copy()
    (Xtr, _), (Xva, _) = split_80_20(X, Y)
    assert Xtr[-1, 0] == 399.0
    assert Xva[0, 0] == 440.0          # 400 + 40 guard rows dropped
    assert Xva[0, 0] - Xtr[-1, 0] > SPLIT_GUARD_ROWS


def test_split_indices_rejects_degenerate():
    with pytest.raises(ValueError):
        split_indices(45)              # validation empty after the guard
    with pytest.raises(ValueError):
        split_indices(1000, ratio=1.5)


def test_split_random_partitions_everything():
    X = np.arange(100.0)[:, None]
    (Xtr, Ytr), (Xva, Yva) = split_random(X, X.copy(), 0.8, seed=4)
    assert Xtr.shape[0] == 80 and Xva.shape[0] == 20
    assert sorted(np.concatenate([Xtr[:, 0], Xva[:, 0]]).tolist()) == \
        list(range(100))
    (Xtr2, _), _ = split_random(X, X.copy(), 0.8, seed=4)
    assert np.array_equal(Xtr, Xtr2)


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------


def test_early_stopper_reference_sequence():
    """1.0 .9 .8 .81 .82 .83 .84 .85 with patience 5: five consecutive
    non-improvements after the epoch-3 minimum stop training at epoch 8."""
    stopper = EarlyStopper(patience=5)
    stops = [stopper.update(v)
             for v in [1.0, 0.9, 0.8, 0.81, 0.82, 0.83, 0.84, 0.85]]
    assert stops == [False] * 7 + [True]
    assert stopper.best_epoch == 3
    assert stopper.best == 0.8


def test_early_stopper_never_stops_while_improving():
    stopper = EarlyStopper(patience=2)
    assert not any(stopper.update(1.0 / (1 + k)) for k in range(50))
    assert stopper.best_epoch == 50


def test_early_stopper_equal_value_is_not_improvement():
    stopper = EarlyStopper(patience=1)
    assert not stopper.update(0.5)
    assert stopper.update(0.5)


# ---------------------------------------------------------------------------
# training loop (tiny decoder)
# ---------------------------------------------------------------------------


def tiny_cfg():
    from neuroincept.model import InceptionConfig
    return ModelConfig(n_channels=2, context_len=9, gru_units=(6, 8),
                       dense_units=(16,), output_dim=6,
                       inception=InceptionConfig(branch_filters=2,
                                                 post_conv_filters=3))


def test_train_reduces_loss_and_reports():
    X, Y = make_linear_problem()
    cfg = TrainConfig(max_epochs=5, batch_size=16, learning_rate=3e-3, seed=0)
    decoder, report = train(X, Y, cfg, decoder=NeuroInceptDecoder(tiny_cfg(), seed=0))
    assert len(report.train_loss) == report.stopped_epoch <= 5
    assert len(report.monitor_loss) == len(report.train_loss)
    assert report.train_loss[-1] < report.train_loss[0]
    assert report.best_epoch >= 1
    assert min(report.monitor_loss) == report.monitor_loss[report.best_epoch - 1]
    rows = report.to_rows()
    assert rows[0][0] == 1 and len(rows) == report.stopped_epoch


def test_train_restores_best_parameters():
    X, Y = make_linear_problem(seed=1)
    cfg = TrainConfig(max_epochs=6, batch_size=16, learning_rate=5e-3, seed=1)
    decoder, report = train(X, Y, cfg, decoder=NeuroInceptDecoder(tiny_cfg(), seed=1))
    n_monitor = max(1, int(np.floor(cfg.inner_val_fraction * X.shape[0])))
    Xm, Ym = X[-n_monitor:], Y[-n_monitor:]
    recomputed = mse(decoder.predict_chunked(Xm), Ym)
    assert abs(recomputed - min(report.monitor_loss)) <= 1e-9


def test_train_deterministic_per_seed():
    X, Y = make_linear_problem(seed=2)
    cfg = TrainConfig(max_epochs=3, batch_size=16, seed=5)
    d1, r1 = train(X, Y, cfg, decoder=NeuroInceptDecoder(tiny_cfg(), seed=5))
    d2, r2 = train(X, Y, cfg, decoder=NeuroInceptDecoder(tiny_cfg(), seed=5))
    assert r1.train_loss == r2.train_loss
    assert r1.monitor_loss == r2.monitor_loss
    for a, b in zip(d1.params.all(), d2.params.all()):
        assert np.array_equal(a.value, b.value)


def test_train_zero_learning_rate_keeps_parameters():
    X, Y = make_linear_problem(seed=3)
    decoder = NeuroInceptDecoder(tiny_cfg(), seed=3)
    before = decoder.params.snapshot()
    cfg = TrainConfig(max_epochs=2, batch_size=16, learning_rate=0.0, seed=3)
    trained, _ = train(X, Y, cfg, decoder=decoder)
    for v, b in zip(trained.params.all(), before):
        assert np.array_equal(v.value, b)


def test_train_raises_on_nonfinite_input():
    X, Y = make_linear_problem(seed=4)
    X[10, 3] = np.nan
    cfg = TrainConfig(max_epochs=2, batch_size=16, seed=0)
    with pytest.raises(TrainingError):
        train(X, Y, cfg, decoder=NeuroInceptDecoder(tiny_cfg(), seed=0))


def test_train_validates_width_against_context():
    X = np.zeros((60, 17))             # not a multiple of 9
    Y = np.zeros((60, 4))
    with pytest.raises(ValueError, match="context"):
        train(X, Y, TrainConfig(max_epochs=1))


# ---------------------------------------------------------------------------
# ridge baseline
# ---------------------------------------------------------------------------


def test_ridge_exact_fit_with_bias():
    X = np.array([[1.0], [2.0], [3.0]])
    Y = 2.0 * X + 1.0
    W = ridge_baseline(X, Y, lam=0.0)
    assert W.shape == (2, 1)
    assert abs(W[0, 0] - 2.0) < 1e-10   # slope
    assert abs(W[1, 0] - 1.0) < 1e-10   # intercept (bias row is last)
    assert np.max(np.abs(ridge_predict(X, W) - Y)) < 1e-10


def test_ridge_matches_normal_equations_oracle(rng):
    X = rng.normal(size=(80, 7))
    Y = rng.normal(size=(80, 3))
    lam = 0.37
    W = ridge_baseline(X, Y, lam)
    Xb = np.hstack([X, np.ones((80, 1))])
    W_ref = np.linalg.solve(Xb.T @ Xb + lam * np.eye(8), Xb.T @ Y)
    assert np.max(np.abs(W - W_ref)) <= 1e-8


def test_ridge_residual_orthogonality_at_lambda_zero(rng):
    X = rng.normal(size=(60, 5))
    Y = rng.normal(size=(60, 2))
    W = ridge_baseline(X, Y, 0.0)
    r = Y - ridge_predict(X, W)
    Xb = np.hstack([X, np.ones((60, 1))])
    assert np.max(np.abs(Xb.T @ r)) < 1e-6


def test_ridge_singular_suggests_regularization():
    X = np.ones((10, 3))               # rank 1 + duplicate bias column
    Y = np.zeros((10, 2))
    with pytest.raises(TrainingError, match="lam > 0"):
        ridge_baseline(X, Y, 0.0)
    W = ridge_baseline(X, Y, 1e-3)     # regularized solve succeeds
    assert np.all(np.isfinite(W))


def test_ridge_shrinkage(rng):
    X = rng.normal(size=(50, 4))
    Y = rng.normal(size=(50, 2))
    w_small = ridge_baseline(X, Y, 1e-6)
    w_large = ridge_baseline(X, Y, 1e3)
    assert np.linalg.norm(w_large) < np.linalg.norm(w_small)


def test_ridge_predict_validates_width(rng):
    W = ridge_baseline(rng.normal(size=(20, 3)), rng.normal(size=(20, 2)), 0.1)
    with pytest.raises(ValueError):
        ridge_predict(np.zeros((5, 4)), W)


def test_ridge_rejects_negative_lambda(rng):
    with pytest.raises(ValueError):
        ridge_baseline(np.zeros((4, 2)), np.zeros((4, 1)), -1.0)
