import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import reference_tgnn as ref
from ddtrack.detect import Detection
from ddtrack.graph import build_graph
from ddtrack.tgnn import (
    EvolveGCN, GraphTensors, MatrixGRU, ModelConfig, TrainConfig, gcn_layer, load_model, node_loss,
    normalized_adjacency, predict, predict_logits, save_model, split_indices, summarize, to_tensors, train,
)
from oracles import gradient_check, params_np, random_instance, tensors


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=float))


# -- graph convolution ----------------------------------------------------


def test_isolated_node_identity():
    x = t([[1.5, -2.0, 0.25]])
    out = gcn_layer(t(normalized_adjacency(np.zeros((1, 1)))), x, torch.eye(3, dtype=x.dtype), act=None)
    assert torch.equal(out, x)


def test_two_connected_nodes_average():
    a_hat = normalized_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(a_hat, 0.5)
    x = t([[1.0, 2.0], [3.0, -6.0]])
    out = gcn_layer(t(a_hat), x, torch.eye(2, dtype=x.dtype), act=None)
    assert torch.allclose(out, t([[2.0, -2.0], [2.0, -2.0]]), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 25), p=st.floats(0, 1))
def test_normalized_adjacency_dense_oracle_and_spectrum(seed, n, p):
    rng = np.random.default_rng(seed)
    a = np.triu((rng.random((n, n)) < p).astype(float), 1)
    a = a + a.T
    got = normalized_adjacency(a)
    assert np.max(np.abs(got - ref.norm_adj(a))) < 1e-12
    assert np.max(np.abs(np.linalg.eigvalsh(got))) <= 1 + 1e-12


# -- recurrent weight evolution -------------------------------------------


def scalar_gru(bias_update=0.0):
    g = MatrixGRU(1, 1, torch.Generator().manual_seed(0))
    with torch.no_grad():
        g.w_update.fill_(0.3)
        g.u_update.fill_(-0.2)
        g.w_reset.fill_(0.5)
        g.u_reset.fill_(0.1)
        g.w_cand.fill_(-0.7)
        g.u_cand.fill_(0.4)
        g.b_update.fill_(bias_update)
    return g


def test_scalar_gru_matches_hand_formula():
    z, q = 0.8, -1.1
    sig = lambda v: 1 / (1 + np.exp(-v))
    u = sig(0.3 * z - 0.2 * q)
    r = sig(0.5 * z + 0.1 * q)
    c = np.tanh(-0.7 * z + 0.4 * r * q)
    expect = (1 - u) * q + u * c
    got = scalar_gru()(t([[z]]), t([[q]])).item()
    assert got == pytest.approx(expect, abs=1e-15)


def test_gru_gate_limits():
    z, q = t([[0.8]]), t([[-1.1]])
    # update gate closed: state passes through
    assert scalar_gru(-1e3)(z, q).item() == pytest.approx(-1.1, abs=1e-15)
    # update gate open: candidate replaces state
    r = 1 / (1 + np.exp(-(0.5 * 0.8 + 0.1 * -1.1)))
    assert scalar_gru(1e3)(z, q).item() == pytest.approx(np.tanh(-0.7 * 0.8 + 0.4 * r * -1.1), abs=1e-15)


def test_summarize_selects_top_scored_nodes_and_pads():
    h = t([[1.0, 0.0], [3.0, 0.0], [-2.0, 0.0]])
    p = t([2.0, 0.0])  # score = first coordinate
    z = summarize(h, p, 4)
    assert z.shape == (2, 4)
    assert torch.allclose(z[0], t([3 * np.tanh(3), 1 * np.tanh(1), -2 * np.tanh(-2), 0.0]))
    assert torch.equal(z[1], torch.zeros(4, dtype=z.dtype))


def test_empty_graph_shapes():
    model = EvolveGCN(ModelConfig(n_classes=3))
    g = GraphTensors(torch.zeros(0, 8, dtype=torch.float64), torch.zeros(0, 0, dtype=torch.float64),
                     torch.zeros(0, dtype=torch.long))
    logits, state = model.step(g, model.initial_state())
    assert logits.shape == (0, 3)
    assert [w.shape for w in state] == [(8, 64), (64, 32)]
    assert node_loss(logits, g.y).item() == 0.0


def test_shape_contract_and_width_check():
    model = EvolveGCN(ModelConfig(n_classes=5))
    snaps, labels = random_instance(1, n_nodes=7, n_snap=3, n_classes=5)
    logits, state = model.forward_sequence(tensors(snaps, labels))
    assert [z.shape for z in logits] == [(7, 5)] * 3
    bad = GraphTensors(torch.zeros(2, 6, dtype=torch.float64), torch.eye(2, dtype=torch.float64), torch.zeros(2))
    with pytest.raises(ValueError):
        model.step(bad, state)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forward_matches_numpy_oracle(seed):
    snaps, labels = random_instance(seed, n_nodes=6, n_snap=3)
    model = EvolveGCN(ModelConfig(n_classes=4, seed=seed))
    logits, _ = model.forward_sequence(tensors(snaps, labels))
    expect = ref.forward(params_np(model), snaps)
    for a, b in zip(logits, expect):
        assert np.max(np.abs(a.detach().numpy() - b[0])) < 1e-12


# -- loss ------------------------------------------------------------------


def test_uniform_logits_loss():
    assert node_loss(torch.zeros(6, 4, dtype=torch.float64), torch.arange(6) % 4).item() == pytest.approx(6 * np.log(4))


def test_loss_matches_log_sum_exp_oracle_with_large_logits():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((9, 5)) * 300
    y = rng.integers(0, 5, 9)
    assert node_loss(t(z), torch.as_tensor(y)).item() == pytest.approx(ref.cross_entropy(z[None], y)[0], rel=1e-13)


def test_class_weights_scale_terms():
    z = t([[2.0, 0.0], [0.0, 1.0]])
    y = torch.tensor([0, 1])
    base = [node_loss(z[i:i + 1], y[i:i + 1]).item() for i in range(2)]
    assert node_loss(z, y, t([3.0, 0.5])).item() == pytest.approx(3 * base[0] + 0.5 * base[1])


# -- gradients -------------------------------------------------------------


def test_gradient_matches_finite_differences():
    worst, n_params = gradient_check()
    assert n_params > 30_000
    assert worst < 1e-4


# -- symmetry and determinism -----------------------------------------------


def test_permutation_equivariance():
    snaps, labels = random_instance(4, n_nodes=6, n_snap=2)
    model = EvolveGCN(ModelConfig(n_classes=4, seed=1))
    perm = np.array([3, 0, 5, 1, 4, 2])
    psnaps = [(x[perm], a[np.ix_(perm, perm)]) for x, a in snaps]
    plabels = [y[perm] for y in labels]
    a, _ = model.forward_sequence(tensors(snaps, labels))
    b, _ = model.forward_sequence(tensors(psnaps, plabels))
    for za, zb in zip(a, b):
        assert torch.allclose(za[perm], zb, atol=1e-12)


def toy_graphs(n_windows=20, seed=0):
    """Two well-separated clusters per window; the class is the Doppler sign."""
    rng = np.random.default_rng(seed)
    graphs = []
    for k in range(n_windows):
        dets = []
        for cls, p0 in ((0, 40), (1, 200)):
            for j in range(4):
                l, p = 30 + 3 * j + int(rng.integers(0, 2)), p0 + j
                dets.append(Detection(l, p, l * 1e-7, (p - 128) * 10.0, float(rng.uniform(50, 100))))
        g = build_graph(dets, k, 9e-7, 90.0, 256)
        g.labels = (g.dopplers > 0).astype(np.int64)
        graphs.append(g)
    return graphs


def test_training_is_deterministic():
    graphs = toy_graphs(12)
    cfg = TrainConfig(epochs=4, patience=10)
    runs = [train(EvolveGCN(ModelConfig(n_classes=2, seed=7)), graphs, cfg).train_loss for _ in range(2)]
    assert runs[0] == runs[1]


def test_separable_toy_is_learned_perfectly():
    graphs = toy_graphs()
    model = EvolveGCN(ModelConfig(n_classes=2, seed=0))
    res = train(model, graphs, TrainConfig(epochs=60, patience=60))
    assert res.train_loss[-1] < res.train_loss[0]
    preds = predict(model, graphs)
    assert all(np.array_equal(p, g.labels) for p, g in zip(preds, graphs))
    # warm start: predictions for a suffix agree with the full run
    tail = predict(model, graphs, start=15)
    assert all(np.array_equal(a, b) for a, b in zip(tail, preds[15:]))


def test_predict_known_logits_and_empty_graph():
    empty = build_graph([], 0, 1e-6, 10.0, 256)
    model = EvolveGCN(ModelConfig(n_classes=3))
    (labels,) = predict(model, [empty])
    assert labels.shape == (0,)
    g = toy_graphs(1)[0]
    (logits,) = predict_logits(model, [g])
    assert np.array_equal(predict(model, [g])[0], np.argmax(logits, axis=1))


def test_train_rejects_bad_labels_and_short_sequences():
    graphs = toy_graphs(10)
    graphs[0].labels[0] = 5
    with pytest.raises(ValueError):
        train(EvolveGCN(ModelConfig(n_classes=2)), graphs, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(EvolveGCN(ModelConfig(n_classes=2)), toy_graphs(2), TrainConfig(epochs=1))


def test_split_indices_contiguous():
    tr, va, te = split_indices(30, (0.65, 0.10, 0.25))
    assert (tr, va, te) == (range(0, 20), range(20, 23), range(23, 30))
    with pytest.raises(ValueError):
        TrainConfig(split=(0.5, 0.5, 0.5))


# -- checkpoints -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    graphs = toy_graphs(12)
    model = EvolveGCN(ModelConfig(n_classes=2, seed=2))
    train(model, graphs, TrainConfig(epochs=2))
    save_model(model, tmp_path / "m.npz", {"note": 1})
    back, extra = load_model(tmp_path / "m.npz", ModelConfig(n_classes=2))
    assert extra == {"note": 1}
    assert np.array_equal(back.scaler.mean, model.scaler.mean)
    for a, b in zip(predict_logits(model, graphs), predict_logits(back, graphs)):
        assert np.array_equal(a, b)


def test_checkpoint_mismatch_rejected(tmp_path):
    save_model(EvolveGCN(ModelConfig(n_classes=2)), tmp_path / "m.npz")
    with pytest.raises(ValueError):
        load_model(tmp_path / "m.npz", ModelConfig(n_classes=4))
    with pytest.raises(ValueError):
        load_model(tmp_path / "m.npz", ModelConfig(n_classes=2, hidden=(16, 8)))


def test_to_tensors_applies_scaler():
    g = toy_graphs(1)[0]
    model = EvolveGCN(ModelConfig(n_classes=2))
    x = to_tensors(g, model.scaler).x.numpy()
    assert np.array_equal(x, g.features)
