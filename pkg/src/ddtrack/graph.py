"""Delay-Doppler graph snapshots built from CFAR detections.

Each detected bin becomes a node identified by ``l * N_nu + p`` so the
same bin keeps its id across windows.  Two nodes are linked when they are
within the delay and Doppler proximity thresholds (inclusive).  Node
features are::

    [id, k, tau, nu, power_db, mean_tau_nbr, mean_nu_nbr, mean_power_db_nbr]

An isolated node uses its own (tau, nu, power) as neighborhood means.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detect import Detection

UNLABELED = -1
N_FEATURES = 8
FEATURE_NAMES = ("id", "k", "tau", "nu", "power_db", "nbr_tau", "nbr_nu", "nbr_power_db")

# slack so thresholds given as an exact multiple of the bin width stay inclusive
_REL_SLACK = 1e-9


def node_id(delay_bin: int, doppler_bin: int, n_doppler: int) -> int:
    if delay_bin < 0 or not 0 <= doppler_bin < n_doppler:
        raise ValueError(f"bin ({delay_bin}, {doppler_bin}) invalid for {n_doppler} Doppler bins")
    return int(delay_bin) * int(n_doppler) + int(doppler_bin)


@dataclass
class DDGraph:
    detections: list[Detection]
    adjacency: np.ndarray  # (N, N) uint8, symmetric, zero diagonal
    features: np.ndarray  # (N, 8)
    window_index: int
    n_doppler: int
    labels: np.ndarray = field(default=None)  # (N,) int, UNLABELED when unknown

    def __post_init__(self):
        if self.labels is None:
            self.labels = np.full(len(self.detections), UNLABELED, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.detections)

    @property
    def ids(self) -> np.ndarray:
        return self.features[:, 0].astype(np.int64)

    @property
    def edges(self) -> list[tuple[int, int]]:
        u, v = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(u.tolist(), v.tolist()))

    @property
    def delays(self) -> np.ndarray:
        return self.features[:, 2]

    @property
    def dopplers(self) -> np.ndarray:
        return self.features[:, 3]

    @property
    def linear_power(self) -> np.ndarray:
        return 10.0 ** (self.features[:, 4] / 10.0)


def proximity_adjacency(tau: np.ndarray, nu: np.ndarray, gamma_tau: float, gamma_nu: float) -> np.ndarray:
    close = (np.abs(tau[:, None] - tau[None, :]) <= gamma_tau * (1 + _REL_SLACK)) & (
        np.abs(nu[:, None] - nu[None, :]) <= gamma_nu * (1 + _REL_SLACK)
    )
    np.fill_diagonal(close, False)
    return close.astype(np.uint8)


def neighborhood_means(adj: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise mean of ``values`` over neighbors; isolated rows keep their own value."""
    deg = adj.sum(axis=1)
    sums = adj.astype(float) @ values
    out = values.astype(float).copy()
    has = deg > 0
    out[has] = sums[has] / deg[has, None]
    return out


def build_graph(
    detections: list[Detection], k: int, gamma_tau: float, gamma_nu: float, n_doppler: int
) -> DDGraph:
    if not (gamma_tau > 0 and gamma_nu > 0):
        raise ValueError("proximity thresholds must be positive")
    dets = sorted(detections, key=lambda d: (d.delay_bin, d.doppler_bin))
    ids = np.array([node_id(d.delay_bin, d.doppler_bin, n_doppler) for d in dets], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError(f"duplicate (delay, Doppler) bins among detections of window {k}")
    n = len(dets)
    tau = np.array([d.delay for d in dets], dtype=float)
    nu = np.array([d.doppler for d in dets], dtype=float)
    pw = np.array([d.power_db for d in dets], dtype=float)
    adj = proximity_adjacency(tau, nu, gamma_tau, gamma_nu)
    own = np.stack([tau, nu, pw], axis=1) if n else np.zeros((0, 3))
    nbr = neighborhood_means(adj, own)
    X = np.column_stack([ids.astype(float), np.full(n, float(k)), own, nbr]) if n else np.zeros((0, N_FEATURES))
    return DDGraph(detections=dets, adjacency=adj, features=X, window_index=k, n_doppler=n_doppler)


def label_nodes(graph: DDGraph, truth: np.ndarray, gate_tau: float, gate_nu: float) -> DDGraph:
    """Attach target labels by gated nearest-target matching.

    ``truth`` has one (tau, nu) row per target.  A node is given the label
    of the target minimizing ``max(|dtau|/gate_tau, |dnu|/gate_nu)`` if that
    distance is at most 1; otherwise the background class ``len(truth)``.
    Ties go to the lower target index.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    n_targets = len(truth)
    labels = np.full(graph.n_nodes, n_targets, dtype=np.int64)
    if graph.n_nodes and n_targets:
        d = np.maximum(
            np.abs(graph.delays[:, None] - truth[None, :, 0]) / gate_tau,
            np.abs(graph.dopplers[:, None] - truth[None, :, 1]) / gate_nu,
        )
        best = np.argmin(d, axis=1)  # first minimum -> lower index wins ties
        inside = d[np.arange(graph.n_nodes), best] <= 1.0 + _REL_SLACK
        labels[inside] = best[inside]
    return replace(graph, labels=labels)


# -- feature standardization ----------------------------------------------


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, graphs: list[DDGraph]) -> "FeatureScaler":
        X = np.concatenate([g.features for g in graphs if g.n_nodes], axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=X.mean(axis=0), std=std)

    @classmethod
    def identity(cls, width: int = N_FEATURES) -> "FeatureScaler":
        return cls(mean=np.zeros(width), std=np.ones(width))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


# -- text export -----------------------------------------------------------


def write_graph(graph: DDGraph, path: str | Path) -> None:
    edges = graph.edges
    ids = graph.ids
    lines = [
        "ddgraph 1",
        f"k={graph.window_index} n_nodes={graph.n_nodes} n_doppler={graph.n_doppler} n_edges={len(edges)}",
    ]
    for i in range(graph.n_nodes):
        feats = " ".join(repr(float(x)) for x in graph.features[i])
        lines.append(f"N {ids[i]} {feats} {int(graph.labels[i])}")
    for u, v in edges:
        lines.append(f"E {ids[u]} {ids[v]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path: str | Path) -> DDGraph:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ddgraph 1":
        raise ValueError(f"{path}: not a ddgraph v1 file")
    header = dict(tok.split("=") for tok in lines[1].split())
    k, n, n_dop = int(header["k"]), int(header["n_nodes"]), int(header["n_doppler"])
    feats, labels, index = [], [], {}
    edges = []
    for line in lines[2:]:
        parts = line.split()
        if parts[0] == "N":
            index[int(parts[1])] = len(feats)
            feats.append([float(x) for x in parts[2:2 + N_FEATURES]])
            labels.append(int(parts[2 + N_FEATURES]))
        elif parts[0] == "E":
            edges.append((int(parts[1]), int(parts[2])))
    if len(feats) != n:
        raise ValueError(f"{path}: header says {n} nodes, found {len(feats)}")
    X = np.array(feats, dtype=float).reshape(n, N_FEATURES)
    adj = np.zeros((n, n), dtype=np.uint8)
    for a, b in edges:
        adj[index[a], index[b]] = adj[index[b], index[a]] = 1
    dets = [
        Detection(int(i) // n_dop, int(i) % n_dop, X[j, 2], X[j, 3], 10.0 ** (X[j, 4] / 10.0))
        for j, i in enumerate(X[:, 0].astype(np.int64))
    ]
    return DDGraph(dets, adj, X, k, n_dop, np.array(labels, dtype=np.int64))
