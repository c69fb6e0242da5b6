"""Classical baseline: DBSCAN -> global nearest neighbor -> linear Kalman filter.

The filter state is ``[tau, nu]`` (seconds, Hz).  Delay is driven by
Doppler through ``d(tau)/dt = -nu / f_c``, so the transition over one
window hop ``dt`` is ``[[1, -dt/f_c], [0, 1]]`` and both components are
measured directly.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import chi2

from .detect import Detection

GATE_99 = float(chi2.ppf(0.99, df=2))
_BIG = 1e12


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 3.0
    min_pts: int = 2

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


def canonical(detections: list[Detection]) -> list[Detection]:
    return sorted(detections, key=lambda d: (d.delay_bin, d.doppler_bin))


def dbscan(detections: list[Detection], params: DbscanParams) -> tuple[list[list[Detection]], list[Detection]]:
    """Density clustering in bin space with Chebyshev distance.

    A point is core when its eps-neighborhood (itself included) holds at
    least ``min_pts`` points.  Border points join the first cluster, in
    canonical (delay, Doppler) order, that reaches them.
    """
    dets = canonical(detections)
    n = len(dets)
    if n == 0:
        return [], []
    b = np.array([(d.delay_bin, d.doppler_bin) for d in dets], dtype=float)
    near = np.max(np.abs(b[:, None, :] - b[None, :, :]), axis=2) <= params.eps
    core = near.sum(axis=1) >= params.min_pts
    label = np.full(n, -1)
    n_clusters = 0
    for i in range(n):
        if not core[i] or label[i] >= 0:
            continue
        label[i] = n_clusters
        queue = deque([i])
        while queue:
            j = queue.popleft()
            if not core[j]:
                continue
            for m in np.flatnonzero(near[j]):
                if label[m] < 0:
                    label[m] = n_clusters
                    queue.append(m)
        n_clusters += 1
    clusters = [[dets[i] for i in np.flatnonzero(label == c)] for c in range(n_clusters)]
    noise = [dets[i] for i in np.flatnonzero(label < 0)]
    return clusters, noise


def cluster_centroid(cluster: list[Detection]) -> np.ndarray:
    """Power-weighted mean (tau, nu) of a cluster."""
    if not cluster:
        raise ValueError("empty cluster")
    w = np.array([d.power for d in cluster])
    tn = np.array([(d.delay, d.doppler) for d in cluster])
    return (w[:, None] * tn).sum(axis=0) / w.sum()


# -- Kalman filter ----------------------------------------------------------


@dataclass
class KfState:
    x: np.ndarray  # [tau, nu]
    P: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    track_id: int = 0
    misses: int = 0


def transition(dt: float, carrier_freq: float) -> np.ndarray:
    return np.array([[1.0, -dt / carrier_freq], [0.0, 1.0]])


def ensure_spd(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    scale = np.sqrt(np.abs(np.diag(P)))
    scale[scale == 0] = 1.0
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        Pj = P + jitter * np.diag(scale**2)
        try:
            np.linalg.cholesky(Pj)
            return Pj
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("covariance is not positive definite")


def kf_predict(s: KfState) -> KfState:
    return replace(s, x=s.F @ s.x, P=ensure_spd(s.F @ s.P @ s.F.T + s.Q))


def innovation(s: KfState, z) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(z, dtype=float) - s.x, s.P + s.R


def kf_update(s: KfState, z) -> KfState:
    y, S = innovation(s, z)
    K = np.linalg.solve(S.T, s.P.T).T  # P S^-1
    I_K = np.eye(2) - K
    P = I_K @ s.P @ I_K.T + K @ s.R @ K.T  # Joseph form
    return replace(s, x=s.x + K @ y, P=ensure_spd(P))


def mahalanobis2(s: KfState, z) -> float:
    y, S = innovation(s, z)
    return float(y @ np.linalg.solve(S, y))


# -- association -----------------------------------------------------------


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    unassigned_tracks: list[int]
    unassigned_measurements: list[int]


def assignment_cost(cost: np.ndarray, pairs, gate: float) -> float:
    """Total of matched costs plus ``gate`` for every track left unmatched."""
    return float(sum(cost[i, j] for i, j in pairs) + gate * (cost.shape[0] - len(pairs)))


def gnn_associate(tracks: list[KfState], measurements, gate: float = GATE_99) -> Assignment:
    """Globally optimal one-to-one assignment on squared Mahalanobis distance.

    Pairs beyond the gate are forbidden; leaving a track unmatched costs
    ``gate``.
    """
    T, M = len(tracks), len(measurements)
    cost = np.array([[mahalanobis2(t, z) for z in measurements] for t in tracks]).reshape(T, M)
    return associate_cost_matrix(cost, gate)


def associate_cost_matrix(cost: np.ndarray, gate: float) -> Assignment:
    T, M = cost.shape
    if T == 0 or M == 0:
        return Assignment([], list(range(T)), list(range(M)))
    big = np.full((T, M + T), _BIG)
    big[:, :M] = np.where(cost <= gate, cost, _BIG)
    big[np.arange(T), M + np.arange(T)] = gate
    rows, cols = linear_sum_assignment(big)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if j < M and cost[i, j] <= gate]
    used_t = {i for i, _ in pairs}
    used_m = {j for _, j in pairs}
    return Assignment(
        sorted(pairs),
        [i for i in range(T) if i not in used_t],
        [j for j in range(M) if j not in used_m],
    )


# -- full tracker ------------------------------------------------------------


@dataclass
class BaselineParams:
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    q_bins: float = 0.1  # process noise std per window, in bins
    r_bins: float = float(1 / np.sqrt(12))  # measurement noise std, in bins
    max_misses: int = 10
    gate: float = GATE_99


@dataclass
class TrackRecord:
    """Per-target estimates: ``est[c, k] = (tau_hat, nu_hat)`` and availability."""

    est: np.ndarray  # (C, K, 2)
    available: np.ndarray  # (C, K) bool

    @classmethod
    def empty(cls, n_targets: int, n_windows: int) -> "TrackRecord":
        return cls(np.full((n_targets, n_windows, 2), np.nan), np.zeros((n_targets, n_windows), dtype=bool))


def run_baseline(
    detections: dict[int, list[Detection]],
    truth0: np.ndarray,
    n_windows: int,
    dt: float,
    carrier_freq: float,
    delay_res: float,
    doppler_res: float,
    params: BaselineParams | None = None,
) -> TrackRecord:
    """Track every target from its ground-truth state at window 0."""
    params = params or BaselineParams()
    truth0 = np.asarray(truth0, dtype=float).reshape(-1, 2)
    res = np.array([delay_res, doppler_res])
    F = transition(dt, carrier_freq)
    Q = np.diag((params.q_bins * res) ** 2)
    R = np.diag((params.r_bins * res) ** 2)
    tracks = [KfState(x=truth0[c].copy(), P=R.copy(), F=F, Q=Q, R=R, track_id=c) for c in range(len(truth0))]
    rec = TrackRecord.empty(len(truth0), n_windows)
    for k in range(n_windows):
        if k > 0:
            tracks = [kf_predict(t) for t in tracks]
        dets = detections.get(k, [])
        clusters, _ = dbscan(dets, params.dbscan)
        meas = [cluster_centroid(c) for c in clusters]
        assoc = gnn_associate(tracks, meas, params.gate)
        for i, j in assoc.pairs:
            tracks[i] = replace(kf_update(tracks[i], meas[j]), misses=0)
        for i in assoc.unassigned_tracks:
            tracks[i] = replace(tracks[i], misses=tracks[i].misses + 1)
        for t in tracks:
            rec.est[t.track_id, k] = t.x
            rec.available[t.track_id, k] = True
        tracks = [t for t in tracks if t.misses < params.max_misses]
    return rec


TRACK_COLUMNS = ("scene", "target", "k", "tau_hat_s", "nu_hat_hz", "available")


def write_tracks(path: str | Path, records: dict[int, TrackRecord], windows=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_COLUMNS)
        for s in sorted(records):
            rec = records[s]
            ks = range(rec.est.shape[1]) if windows is None else windows
            for c in range(rec.est.shape[0]):
                for k in ks:
                    ok = bool(rec.available[c, k])
                    tau, nu = rec.est[c, k] if ok else (float("nan"), float("nan"))
                    w.writerow([s, c, k, repr(float(tau)), repr(float(nu)), int(ok)])


def read_tracks(path: str | Path, n_targets: int, n_windows: int) -> dict[int, TrackRecord]:
    out: dict[int, TrackRecord] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s, c, k = int(row["scene"]), int(row["target"]), int(row["k"])
            rec = out.setdefault(s, TrackRecord.empty(n_targets, n_windows))
            if int(row["available"]):
                rec.est[c, k] = float(row["tau_hat_s"]), float(row["nu_hat_hz"])
                rec.available[c, k] = True
    return out
