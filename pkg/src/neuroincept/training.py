"""Optimization: MSE objective, Adam, temporal splits, early stopping,
and the closed-form ridge baseline.

The split logic is deliberately temporal.  Context-stacked rows overlap
(order 4, step 5 spans 20 frames each side), so a shuffled split would put
near-duplicates of training rows into validation.  The contiguous split
plus a 2*order*step guard band keeps validation context windows from
touching any training frame.  A shuffled mode exists behind a flag for
comparisons.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import autodiff as ad
from .dsp import CONTEXT_ORDER, CONTEXT_STEP
from .rng import SplitMix64

logger = logging.getLogger(__name__)

SPLIT_GUARD_ROWS = 2 * CONTEXT_ORDER * CONTEXT_STEP


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    split_ratio: float = 0.8
    inner_val_fraction: float = 0.1
    seed: int = 0
    split_mode: str = "contiguous"  # or "random"

    def __post_init__(self):
        try:
            self.learning_rate = float(self.learning_rate)
            self.split_ratio = float(self.split_ratio)
            self.inner_val_fraction = float(self.inner_val_fraction)
            self.batch_size = int(self.batch_size)
            self.max_epochs = int(self.max_epochs)
            self.patience = int(self.patience)
            self.seed = int(self.seed)
        except (TypeError, ValueError) as e:
            raise ValueError(f"non-numeric training setting: {e}") from e
        if not self.learning_rate >= 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.inner_val_fraction < 1.0:
            raise ValueError("inner_val_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.split_mode not in ("contiguous", "random"):
            raise ValueError(f"unknown split_mode {self.split_mode!r}")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    monitor_loss: list = field(default_factory=list)
    best_epoch: int = 0      # 1-based; 0 = never improved
    stopped_epoch: int = 0
    wall_time_s: float = 0.0

    def to_rows(self):
        """(epoch, train_loss, monitor_loss) triples; wall time deliberately
        omitted so persisted reports are run-to-run identical."""
        return [(e + 1, self.train_loss[e], self.monitor_loss[e])
                for e in range(len(self.train_loss))]


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over all entries of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(d * d))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class AdamState:
    """First/second moment accumulators, zero at t=0."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def check_shapes(self, params):
        for p, m in zip(params, self.m):
            if p.value.shape != m.shape:
                raise ValueError("AdamState does not match parameter shapes")


def adam_step(params, grads, state: AdamState, t: int, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place.  ``t`` is 1-based."""
    if t < 1:
        raise ValueError("Adam step index t must be >= 1")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise TrainingError(
                f"non-finite gradient in parameter {p.op} at step {t}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def split_indices(n_rows: int, ratio: float = 0.8,
                  guard: int = SPLIT_GUARD_ROWS):
    """Contiguous split bounds: train [0, cut), validation [cut+guard, n)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    cut = int(np.floor(ratio * n_rows))
    val_start = cut + guard
    if cut < 1 or val_start >= n_rows:
        raise ValueError(
            f"split of {n_rows} rows at ratio {ratio} with guard {guard} "
            f"leaves an empty side")
    return slice(0, cut), slice(val_start, n_rows)


def split_80_20(X: np.ndarray, Y: np.ndarray, ratio: float = 0.8):
    """Temporal 80-20 split with the context-overlap guard band.

    Returns ((X_train, Y_train), (X_val, Y_val)).  The guard drops the
    first 2*order*step validation rows, whose stacked context would reach
    back into training frames.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X and Y row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    tr, va = split_indices(X.shape[0], ratio)
    return (X[tr], Y[tr]), (X[va], Y[va])


def split_random(X: np.ndarray, Y: np.ndarray, ratio: float, seed: int):
    """Seeded shuffled split (no guard; rows assumed exchangeable)."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X and Y row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    n = X.shape[0]
    cut = int(np.floor(ratio * n))
    if cut < 1 or cut >= n:
        raise ValueError(f"split of {n} rows at ratio {ratio} leaves an empty side")
    order = SplitMix64(seed).permutation(n)
    tr, va = order[:cut], order[cut:]
    return (X[tr], Y[tr]), (X[va], Y[va])


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


class EarlyStopper:
    """Patience counter over a monitored loss; strict improvement resets.

    With patience 5 and monitor values 1.0, .9, .8, .81, .82, .83, .84,
    .85 the stall counter reaches 5 on the eighth value, so training
    stops after epoch 8 with best epoch 3.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stall = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch's monitor value; True once training should stop."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.best_epoch = self.epoch
            self.stall = 0
        else:
            self.stall += 1
        return self.stall >= self.patience


def train(X: np.ndarray, Y: np.ndarray, cfg: TrainConfig, decoder=None):
    """Mini-batch Adam with early stopping; returns (decoder, TrainReport).

    ``X``/``Y`` are the training-side rows (the 20% validation set stays
    outside).  The last ``inner_val_fraction`` of rows is held out as the
    early-stopping monitor and receives no gradient updates.  Stops once
    the monitor has not improved for ``patience`` consecutive epochs, then
    restores the best-monitor parameters.
    """
    from .model import ModelConfig, NeuroInceptDecoder

    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"bad training data shapes {X.shape} / {Y.shape}")
    if decoder is None:
        n_channels, rem = divmod(X.shape[1], 2 * CONTEXT_ORDER + 1)
        if rem:
            raise ValueError(
                f"feature width {X.shape[1]} is not a multiple of the "
                f"context length {2 * CONTEXT_ORDER + 1}")
        decoder = NeuroInceptDecoder(
            ModelConfig(n_channels=n_channels, output_dim=Y.shape[1]),
            seed=cfg.seed)

    n_monitor = max(1, int(np.floor(cfg.inner_val_fraction * X.shape[0])))
    n_update = X.shape[0] - n_monitor
    if n_update < 1:
        raise ValueError("no update rows left after monitor holdout")
    Xu, Yu = X[:n_update], Y[:n_update]
    Xm, Ym = X[n_update:], Y[n_update:]

    params = decoder.params.all()
    state = AdamState(params)
    rng = SplitMix64(cfg.seed ^ 0x5DEECE66D)
    report = TrainReport()
    stopper = EarlyStopper(cfg.patience)
    best_snapshot = decoder.params.snapshot()
    t = 0
    t_start = time.monotonic()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_update)
        sq_sum = 0.0
        for lo in range(0, n_update, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            ad.zero_grad(params)
            pred = decoder.forward(ad.param(Xu[idx]))
            loss = ad.mse(pred, Yu[idx])
            if not np.isfinite(loss.value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}")
            ad.backward(loss)
            t += 1
            adam_step(params, [p.grad for p in params], state, t,
                      cfg.learning_rate)
            sq_sum += float(loss.value) * idx.size
        report.train_loss.append(sq_sum / n_update)

        monitor = mse(decoder.predict_chunked(Xm), Ym)
        report.monitor_loss.append(monitor)
        logger.info("epoch %d: train %.6g, monitor %.6g (%.1fs)",
                    epoch, report.train_loss[-1], monitor,
                    time.monotonic() - t_start)
        stop = stopper.update(monitor)
        if stopper.best_epoch == epoch:
            report.best_epoch = epoch
            best_snapshot = decoder.params.snapshot()
        report.stopped_epoch = epoch
        if stop:
            break

    decoder.params.restore(best_snapshot)
    decoder.params.check_finite()
    report.wall_time_s = time.monotonic() - t_start
    return decoder, report


# ---------------------------------------------------------------------------
# linear baseline
# ---------------------------------------------------------------------------


def _with_bias(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def ridge_baseline(X: np.ndarray, Y: np.ndarray, lam: float = 0.0) -> np.ndarray:
    """W = (X'X + lam*I)^-1 X'Y with a bias column appended to X.

    Solved by Cholesky factorization of the (symmetric positive definite)
    regularized Gram matrix.  Returns (D+1) x n_targets weights whose last
    row is the intercept.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"bad ridge data shapes {X.shape} / {Y.shape}")
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    Xb = _with_bias(X)
    gram = Xb.T @ Xb
    if lam > 0:
        gram = gram + lam * np.eye(gram.shape[0])
    try:
        cho = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as e:
        raise TrainingError(
            f"normal equations are singular at lam={lam}; "
            f"retry with lam > 0") from e
    return scipy.linalg.cho_solve(cho, Xb.T @ Y)


def ridge_predict(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] + 1 != W.shape[0]:
        raise ValueError(
            f"feature width {X.shape[1]} does not match weights {W.shape}")
    return _with_bias(X) @ W
