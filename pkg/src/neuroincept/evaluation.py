"""Reconstruction metrics and the fold-resampled evaluation protocol.

PCC is computed per mel bin across time and averaged over bins; bins that
are constant on either side have no defined correlation and are excluded
(the count is reported).  The protocol draws 1,000 seeded validation rows,
partitions them into 10 folds of 100, and reports per-fold and summary
MSE / PCC / STGI.  The folds resample the metric only; nothing is
retrained.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64
from .stgi import StgiConfig, stgi
from .training import mse


class MetricError(Exception):
    pass


N_FOLDS = 10
SAMPLES_PER_FOLD = 100


def pcc(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation, clipped into [-1, 1].

    The denominator is sqrt(var_x * var_y) in one square root; for y = x
    the ratio is computed from bit-identical numerator and radicand, so
    pcc(x, x) returns exactly 1.0.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"pcc length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("pcc needs at least 2 points")
    xm = x - x.mean()
    ym = y - y.mean()
    vx = float(np.mean(xm * xm))
    vy = float(np.mean(ym * ym))
    if vx == 0.0 or vy == 0.0:
        raise MetricError("pcc is undefined for a constant input")
    cov = float(np.mean(xm * ym))
    return float(np.clip(cov / np.sqrt(vx * vy), -1.0, 1.0))


def pcc_spectrogram(pred: np.ndarray, ref: np.ndarray):
    """Per-bin PCC across time, averaged over bins.

    Returns (mean, per_bin) where per_bin carries NaN at excluded
    (constant) bins; the mean runs over the defined bins only.
    """
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    ref = np.asarray(getattr(ref, "values", ref), dtype=np.float64)
    if pred.shape != ref.shape or pred.ndim != 2:
        raise ValueError(f"pcc_spectrogram needs equal T x bins inputs, "
                         f"got {pred.shape} vs {ref.shape}")
    if pred.shape[0] < 2:
        raise ValueError("pcc_spectrogram needs T >= 2")
    per_bin = np.full(pred.shape[1], np.nan)
    for b in range(pred.shape[1]):
        try:
            per_bin[b] = pcc(pred[:, b], ref[:, b])
        except MetricError:
            continue
    defined = np.isfinite(per_bin)
    if not defined.any():
        raise MetricError("every bin is constant; spectrogram PCC undefined")
    return float(per_bin[defined].mean()), per_bin


def pcc_flat(pred: np.ndarray, ref: np.ndarray) -> float:
    """Alternative headline: PCC over the flattened spectrograms."""
    return pcc(np.asarray(pred).ravel(), np.asarray(ref).ravel())


@dataclass
class EvalReport:
    participant: str
    n_rows_available: int
    n_rows_used: int
    subsampled: bool                      # False when < 1000 rows forced "use all"
    fold_mse: list = field(default_factory=list)
    fold_pcc: list = field(default_factory=list)
    fold_stgi: list = field(default_factory=list)
    excluded_bins: int = 0

    @property
    def mse_mean(self) -> float:
        return float(np.mean(self.fold_mse))

    @property
    def pcc_mean(self) -> float:
        return float(np.mean(self.fold_pcc))

    @property
    def pcc_std(self) -> float:
        return float(np.std(self.fold_pcc))

    @property
    def stgi_mean(self) -> float:
        return float(np.mean(self.fold_stgi))

    @property
    def stgi_std(self) -> float:
        return float(np.std(self.fold_stgi))


def evaluate_protocol(pred: np.ndarray, ref: np.ndarray, participant: str = "?",
                      seed: int = 0, stgi_cfg: StgiConfig | None = None) -> EvalReport:
    """Fold-resampled metrics over seeded validation rows.

    Draws 1,000 rows (all rows, flagged, when fewer are available),
    partitions them into 10 folds in temporal order, and computes MSE,
    spectrogram PCC, and STGI per fold.  Stds are population stds over the
    10 fold values.
    """
    pred = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    ref = np.asarray(getattr(ref, "values", ref), dtype=np.float64)
    if pred.shape != ref.shape or pred.ndim != 2:
        raise ValueError(f"evaluate_protocol needs equal T x bins inputs, "
                         f"got {pred.shape} vs {ref.shape}")
    n = pred.shape[0]
    if n == 0:
        raise ValueError("empty validation set")
    want = N_FOLDS * SAMPLES_PER_FOLD
    if n >= want:
        rows = SplitMix64(seed).sample_without_replacement(n, want)
        subsampled = True
    else:
        rows = np.arange(n)
        subsampled = False
    fold_bounds = np.linspace(0, rows.size, N_FOLDS + 1).astype(int)
    report = EvalReport(participant=participant, n_rows_available=n,
                        n_rows_used=int(rows.size), subsampled=subsampled)
    excluded = 0
    for f in range(N_FOLDS):
        sel = rows[fold_bounds[f]:fold_bounds[f + 1]]
        if sel.size == 0:
            raise ValueError(f"fold {f} is empty: {n} rows cannot fill "
                             f"{N_FOLDS} folds")
        p, r = pred[sel], ref[sel]
        report.fold_mse.append(mse(p, r))
        m, per_bin = pcc_spectrogram(p, r)
        excluded = max(excluded, int(np.sum(~np.isfinite(per_bin))))
        report.fold_pcc.append(m)
        report.fold_stgi.append(stgi(p, r, stgi_cfg))
    report.excluded_bins = excluded
    return report


def report_to_csv(report: EvalReport, path) -> None:
    """One row per fold plus a summary row, Table-I column order
    (MSE, PCC value/std, STGI value/std)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["participant", "row", "mse", "pcc", "pcc_std",
                    "stgi", "stgi_std"])
        for f in range(len(report.fold_mse)):
            w.writerow([report.participant, f"fold{f}",
                        repr(report.fold_mse[f]), repr(report.fold_pcc[f]),
                        "", repr(report.fold_stgi[f]), ""])
        w.writerow([report.participant, "summary",
                    repr(report.mse_mean),
                    repr(report.pcc_mean), repr(report.pcc_std),
                    repr(report.stgi_mean), repr(report.stgi_std)])
