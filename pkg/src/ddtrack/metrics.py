"""Per-target estimates from node predictions, RMSE and masked NMSE."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baseline import TrackRecord
from .graph import DDGraph


def estimate_from_labels(graph: DDGraph, predicted: np.ndarray, n_targets: int) -> tuple[np.ndarray, np.ndarray]:
    """Power-weighted (tau, nu) of the nodes predicted as each target.

    Returns ``(est, available)`` with shapes (C, 2) and (C,).  Classes
    without nodes are unavailable; the background class is ignored.
    """
    predicted = np.asarray(predicted)
    est = np.full((n_targets, 2), np.nan)
    ok = np.zeros(n_targets, dtype=bool)
    w = graph.linear_power
    tn = graph.features[:, 2:4]
    for c in range(n_targets):
        sel = predicted == c
        if sel.any():
            est[c] = (w[sel, None] * tn[sel]).sum(axis=0) / w[sel].sum()
            ok[c] = True
    return est, ok


def record_from_predictions(graphs: list[DDGraph], predictions: list[np.ndarray], n_targets: int,
                            n_windows: int) -> TrackRecord:
    rec = TrackRecord.empty(n_targets, n_windows)
    for g, pred in zip(graphs, predictions):
        est, ok = estimate_from_labels(g, pred, n_targets)
        rec.est[:, g.window_index] = est
        rec.available[:, g.window_index] = ok
    return rec


@dataclass
class MaskedSeries:
    """Estimates, truth and validity mask, indexed (scene, target, window)."""

    est: np.ndarray
    truth: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.est = np.asarray(self.est, dtype=float)
        self.truth = np.asarray(self.truth, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool) & np.isfinite(self.est) & np.isfinite(self.truth)


def per_step_errors(series: MaskedSeries) -> np.ndarray:
    """Absolute errors at the valid entries (flattened)."""
    return np.abs(series.est[series.mask] - series.truth[series.mask])


def rmse(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("RMSE of an empty error set")
    return float(np.sqrt(np.mean(errors**2)))


def nmse(series: MaskedSeries) -> float:
    m = series.mask
    den = np.sum(series.truth[m] ** 2)
    if not den > 0:
        raise ValueError("NMSE undefined: masked ground truth has zero energy")
    return float(np.sum((series.est[m] - series.truth[m]) ** 2) / den)


def series_from_records(records: dict[int, TrackRecord], truth: dict[int, np.ndarray], windows,
                        component: int) -> MaskedSeries:
    """Stack one component (0 = delay, 1 = Doppler) over scenes for the given windows.

    ``truth[s]`` has shape (C, K, 2) like ``TrackRecord.est``.
    """
    ks = list(windows)
    scenes = sorted(records)
    est = np.stack([records[s].est[:, ks, component] for s in scenes])
    gt = np.stack([truth[s][:, ks, component] for s in scenes])
    mask = np.stack([records[s].available[:, ks] for s in scenes])
    return MaskedSeries(est, gt, mask)


@dataclass
class MethodMetrics:
    method: str
    nmse_tau: float
    nmse_nu: float
    rmse_tau_bins: list[float]  # per target, nan where no valid step
    rmse_nu_bins: list[float]
    coverage: list[float]  # fraction of (scene, window) pairs with an estimate, per target


def evaluate(method: str, records, truth, windows, delay_res: float, doppler_res: float) -> MethodMetrics:
    s_tau = series_from_records(records, truth, windows, 0)
    s_nu = series_from_records(records, truth, windows, 1)
    n_targets = s_tau.est.shape[1]

    def per_target(series, res):
        out = []
        for c in range(n_targets):
            sub = MaskedSeries(series.est[:, c], series.truth[:, c], series.mask[:, c])
            e = per_step_errors(sub)
            out.append(rmse(e) / res if e.size else float("nan"))
        return out

    return MethodMetrics(
        method=method,
        nmse_tau=nmse(s_tau),
        nmse_nu=nmse(s_nu),
        rmse_tau_bins=per_target(s_tau, delay_res),
        rmse_nu_bins=per_target(s_nu, doppler_res),
        coverage=[float(s_tau.mask[:, c].mean()) for c in range(n_targets)],
    )


def write_table(path: str | Path, results: list[MethodMetrics]) -> None:
    """NMSE comparison: columns Method, NMSE_tau, NMSE_nu."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Method", "NMSE_tau", "NMSE_nu"])
        for r in results:
            w.writerow([r.method, repr(r.nmse_tau), repr(r.nmse_nu)])


def write_rmse(path: str | Path, results: list[MethodMetrics]) -> None:
    """Per-target RMSE in bins plus estimate coverage."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "target", "rmse_delay_bins", "rmse_doppler_bins", "coverage"])
        for r in results:
            for c, (a, b, cov) in enumerate(zip(r.rmse_tau_bins, r.rmse_nu_bins, r.coverage)):
                w.writerow([r.method, c, repr(a), repr(b), repr(cov)])
