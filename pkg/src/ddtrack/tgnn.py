"""EvolveGCN (weights-as-hidden-state variant) for temporal node classification.

Each GCN layer's weight matrix is the hidden state of a matrix GRU.  At
every snapshot the layer input embeddings are summarized into as many
node vectors as the weight matrix has columns (learned scorer, top-r
selection), and the GRU advances the weights column by column before the
graph convolution is applied.  An MLP decoder turns the last GCN layer's
embeddings into class logits.

Everything runs in float64 on the CPU; PyTorch is used only for autograd
and Adam.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .graph import N_FEATURES, DDGraph, FeatureScaler

log = logging.getLogger(__name__)

DTYPE = torch.float64
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    n_classes: int
    in_dim: int = N_FEATURES
    hidden: tuple[int, ...] = (64, 32)
    decoder_hidden: int = 32
    seed: int = 0


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    history_window: int = 6
    split: tuple[float, float, float] = (0.65, 0.10, 0.25)
    epochs: int = 200
    patience: int = 20
    seed: int = 0
    class_weights: list[float] | None = None

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")


def split_indices(n: int, split: tuple[float, float, float]) -> tuple[range, range, range]:
    """Contiguous train/val/test ranges over ``n`` time-ordered windows."""
    n_train = int(math.floor(split[0] * n + 0.5))
    n_val = int(math.floor(split[1] * n + 0.5))
    n_val = min(n_val, n - n_train)
    return range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n)


# -- graph -> tensors ------------------------------------------------------


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = np.asarray(adj, dtype=float) + np.eye(len(adj))
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


@dataclass
class GraphTensors:
    x: torch.Tensor
    a_hat: torch.Tensor
    y: torch.Tensor


def to_tensors(graph: DDGraph, scaler: FeatureScaler) -> GraphTensors:
    return GraphTensors(
        x=torch.as_tensor(scaler.transform(graph.features), dtype=DTYPE),
        a_hat=torch.as_tensor(normalized_adjacency(graph.adjacency), dtype=DTYPE),
        y=torch.as_tensor(np.asarray(graph.labels), dtype=torch.long),
    )


# -- building blocks -------------------------------------------------------


def gcn_layer(a_hat: torch.Tensor, h: torch.Tensor, w: torch.Tensor, act=torch.relu) -> torch.Tensor:
    out = a_hat @ (h @ w)
    return out if act is None else act(out)


def summarize(h: torch.Tensor, scorer: torch.Tensor, r: int) -> torch.Tensor:
    """Top-r node embeddings by learned score, scaled by tanh(score), as columns.

    Returns a (feature_dim, r) matrix; missing nodes are zero columns.
    """
    scores = h @ scorer / torch.linalg.vector_norm(scorer)
    n = h.shape[0]
    _, order = torch.sort(scores, descending=True, stable=True)
    idx = order[: min(r, n)]
    z = h[idx] * torch.tanh(scores[idx]).unsqueeze(1)
    if z.shape[0] < r:
        z = torch.cat([z, h.new_zeros(r - z.shape[0], h.shape[1])], dim=0)
    return z.T


class MatrixGRU(nn.Module):
    """GRU whose hidden state is a (rows, cols) matrix, updated column-wise."""

    def __init__(self, rows: int, cols: int, gen: torch.Generator):
        super().__init__()
        bound = 1.0 / math.sqrt(rows)

        def mat():
            return nn.Parameter((torch.rand(rows, rows, generator=gen, dtype=DTYPE) * 2 - 1) * bound)

        self.w_update, self.u_update = mat(), mat()
        self.w_reset, self.u_reset = mat(), mat()
        self.w_cand, self.u_cand = mat(), mat()
        self.b_update = nn.Parameter(torch.zeros(rows, cols, dtype=DTYPE))
        self.b_reset = nn.Parameter(torch.zeros(rows, cols, dtype=DTYPE))
        self.b_cand = nn.Parameter(torch.zeros(rows, cols, dtype=DTYPE))

    def forward(self, z: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
        update = torch.sigmoid(self.w_update @ z + self.u_update @ q + self.b_update)
        reset = torch.sigmoid(self.w_reset @ z + self.u_reset @ q + self.b_reset)
        cand = torch.tanh(self.w_cand @ z + self.u_cand @ (reset * q) + self.b_cand)
        return (1 - update) * q + update * cand


def _glorot(rows: int, cols: int, gen: torch.Generator) -> nn.Parameter:
    bound = math.sqrt(6.0 / (rows + cols))
    return nn.Parameter((torch.rand(rows, cols, generator=gen, dtype=DTYPE) * 2 - 1) * bound)


class EvolveGCN(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(config.seed)
        dims = (config.in_dim, *config.hidden)
        self.init_weights = nn.ParameterList()
        self.evolvers = nn.ModuleList()
        self.scorers = nn.ParameterList()
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            self.init_weights.append(_glorot(d_in, d_out, gen))
            self.evolvers.append(MatrixGRU(d_in, d_out, gen))
            bound = 1.0 / math.sqrt(d_in)
            self.scorers.append(nn.Parameter((torch.rand(d_in, generator=gen, dtype=DTYPE) * 2 - 1) * bound))
        self.dec_w1 = _glorot(dims[-1], config.decoder_hidden, gen)
        self.dec_b1 = nn.Parameter(torch.zeros(config.decoder_hidden, dtype=DTYPE))
        self.dec_w2 = _glorot(config.decoder_hidden, config.n_classes, gen)
        self.dec_b2 = nn.Parameter(torch.zeros(config.n_classes, dtype=DTYPE))
        self.scaler = FeatureScaler.identity(config.in_dim)

    def initial_state(self) -> list[torch.Tensor]:
        return list(self.init_weights)

    def evolve_weights(self, layer: int, h_in: torch.Tensor, w_prev: torch.Tensor) -> torch.Tensor:
        z = summarize(h_in, self.scorers[layer], w_prev.shape[1])
        return self.evolvers[layer](z, w_prev)

    def decode(self, h: torch.Tensor) -> torch.Tensor:
        return torch.relu(h @ self.dec_w1 + self.dec_b1) @ self.dec_w2 + self.dec_b2

    def step(self, g: GraphTensors, state: list[torch.Tensor]) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if g.x.shape[1] != self.config.in_dim:
            raise ValueError(f"feature width {g.x.shape[1]} != model input width {self.config.in_dim}")
        h = g.x
        new_state = []
        for layer, w_prev in enumerate(state):
            w = self.evolve_weights(layer, h, w_prev)
            h = gcn_layer(g.a_hat, h, w)
            new_state.append(w)
        return self.decode(h), new_state

    def forward_sequence(self, seq: list[GraphTensors], state=None) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
        state = self.initial_state() if state is None else state
        logits = []
        for g in seq:
            out, state = self.step(g, state)
            logits.append(out)
        return logits, state


def node_loss(logits: torch.Tensor, labels: torch.Tensor, class_weights: torch.Tensor | None = None) -> torch.Tensor:
    """Summed softmax cross-entropy over the nodes of one snapshot."""
    if logits.shape[0] == 0:
        return logits.sum()
    nll = -torch.log_softmax(logits, dim=1).gather(1, labels.unsqueeze(1)).squeeze(1)
    if class_weights is not None:
        nll = nll * class_weights[labels]
    return nll.sum()


# -- training --------------------------------------------------------------


@dataclass
class TrainResult:
    model: EvolveGCN
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def train(model: EvolveGCN, graphs: list[DDGraph], config: TrainConfig) -> TrainResult:
    """Fit on the leading train split with truncated BPTT; keep the best-validation weights."""
    tr, va, _ = split_indices(len(graphs), config.split)
    if len(tr) == 0 or len(va) == 0:
        raise ValueError(f"empty train or validation split for {len(graphs)} windows")
    for g in graphs[: va.stop]:
        if np.any(g.labels < 0) or np.any(g.labels >= model.config.n_classes):
            raise ValueError(f"window {g.window_index}: labels outside [0, {model.config.n_classes})")
    torch.manual_seed(config.seed)
    model.scaler = FeatureScaler.fit([graphs[k] for k in tr])
    seq = [to_tensors(g, model.scaler) for g in graphs[: va.stop]]
    cw = None if config.class_weights is None else torch.as_tensor(config.class_weights, dtype=DTYPE)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8)

    result = TrainResult(model=model)
    best_val, best_params, stale = math.inf, None, 0
    for epoch in range(config.epochs):
        # inputs[j]: detached evolver state entering window j
        inputs = [[w.detach() for w in model.initial_state()]]
        epoch_loss = 0.0
        for k in tr:
            first = max(tr.start, k - config.history_window + 1)
            state = model.initial_state() if first == 0 else inputs[first]
            for j in range(first, k + 1):
                logits, state = model.step(seq[j], state)
            loss = node_loss(logits, seq[k].y, cw)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, window {k}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            inputs.append([w.detach() for w in state])
            epoch_loss += loss.item()
        state = inputs[-1]
        with torch.no_grad():
            val = 0.0
            for k in va:
                logits, state = model.step(seq[k], state)
                val += node_loss(logits, seq[k].y, cw).item()
        result.train_loss.append(epoch_loss)
        result.val_loss.append(val)
        if val < best_val:
            best_val, best_params, stale = val, copy.deepcopy(model.state_dict()), 0
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    if best_params is not None:
        model.load_state_dict(best_params)
    return result


@torch.no_grad()
def predict_logits(model: EvolveGCN, graphs: list[DDGraph]) -> list[np.ndarray]:
    """Logits for every graph; the evolver runs over the whole given sequence in order."""
    seq = [to_tensors(g, model.scaler) for g in graphs]
    logits, _ = model.forward_sequence(seq)
    return [z.numpy() for z in logits]


def predict(model: EvolveGCN, graphs: list[DDGraph], start: int = 0) -> list[np.ndarray]:
    """Class labels for ``graphs[start:]``, warm-starting the evolver on ``graphs[:start]``."""
    return [np.argmax(z, axis=1) if len(z) else np.zeros(0, dtype=np.int64)
            for z in predict_logits(model, graphs)[start:]]


# -- checkpoints -----------------------------------------------------------


def save_model(model: EvolveGCN, path: str | Path, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "model": asdict(model.config),
        "scaler_mean": model.scaler.mean.tolist(),
        "scaler_std": model.scaler.std.tolist(),
        "extra": extra or {},
    }
    arrays = {name: p.detach().numpy() for name, p in model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_model(path: str | Path, expect: ModelConfig | None = None) -> tuple[EvolveGCN, dict]:
    with np.load(path) as npz:
        meta = json.loads(npz["__meta__"].tobytes().decode())
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    cfg = meta["model"]
    cfg["hidden"] = tuple(cfg["hidden"])
    config = ModelConfig(**cfg)
    if expect is not None:
        for key in ("n_classes", "in_dim", "hidden", "decoder_hidden"):
            if getattr(expect, key) != getattr(config, key):
                raise ValueError(f"{path}: checkpoint {key}={getattr(config, key)} but expected {getattr(expect, key)}")
    model = EvolveGCN(config)
    own = model.state_dict()
    for name, arr in arrays.items():
        if name not in own or tuple(own[name].shape) != arr.shape:
            raise ValueError(f"{path}: parameter {name} has shape {arr.shape}, model expects "
                             f"{tuple(own[name].shape) if name in own else 'nothing'}")
    if set(own) != set(arrays):
        raise ValueError(f"{path}: missing parameters {sorted(set(own) - set(arrays))}")
    model.load_state_dict({k: torch.as_tensor(v, dtype=DTYPE) for k, v in arrays.items()})
    model.scaler = FeatureScaler(np.asarray(meta["scaler_mean"]), np.asarray(meta["scaler_std"]))
    return model, meta.get("extra", {})
