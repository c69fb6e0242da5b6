import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddtrack.baseline import TrackRecord
from ddtrack.detect import Detection
from ddtrack.graph import build_graph
from ddtrack.metrics import (
    MaskedSeries, MethodMetrics, estimate_from_labels, evaluate, nmse, per_step_errors, record_from_predictions,
    rmse, write_rmse, write_table,
)


def test_rmse_closed_forms():
    assert rmse([3.0, -4.0]) == pytest.approx(np.sqrt(12.5))
    assert rmse([0.0]) == 0.0
    with pytest.raises(ValueError):
        rmse([])


def test_nmse_closed_form():
    s = MaskedSeries(est=[1.0, 2.0], truth=[2.0, 2.0], mask=[1, 1])
    assert nmse(s) == pytest.approx(1.0 / 8.0)


@settings(max_examples=50, deadline=None)
@given(truth=st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-3), min_size=1, max_size=30))
def test_zero_predictor_gives_one(truth):
    s = MaskedSeries(np.zeros(len(truth)), truth, np.ones(len(truth)))
    assert nmse(s) == 1.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20), extra=st.integers(1, 10))
def test_masked_insertion_leaves_nmse_unchanged(seed, n, extra):
    rng = np.random.default_rng(seed)
    est, truth = rng.standard_normal(n), rng.standard_normal(n) + 3.0
    base = nmse(MaskedSeries(est, truth, np.ones(n)))
    pos = rng.integers(0, n + 1, extra)
    est2 = np.insert(est, pos, rng.standard_normal(extra) * 1e6)
    truth2 = np.insert(truth, pos, rng.standard_normal(extra))
    mask2 = np.insert(np.ones(n, dtype=bool), pos, False)
    assert abs(nmse(MaskedSeries(est2, truth2, mask2)) - base) <= 1e-12 * max(base, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-8, 1e8))
def test_nmse_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    est, truth = rng.standard_normal(12), rng.standard_normal(12) + 1.0
    a = nmse(MaskedSeries(est, truth, np.ones(12)))
    b = nmse(MaskedSeries(c * est, c * truth, np.ones(12)))
    assert b == pytest.approx(a, rel=1e-9)


def test_nan_entries_are_masked_out():
    s = MaskedSeries([1.0, np.nan], [1.0, 5.0], [1, 1])
    assert s.mask.tolist() == [True, False]
    assert per_step_errors(s).tolist() == [0.0]


def test_zero_energy_truth_rejected():
    with pytest.raises(ValueError):
        nmse(MaskedSeries([1.0], [0.0], [1]))
    with pytest.raises(ValueError):
        nmse(MaskedSeries([1.0], [1.0], [0]))


def graph():
    dets = [Detection(10, 140, 1e-6, 120.0, 3.0), Detection(11, 140, 1.1e-6, 120.0, 1.0),
            Detection(50, 60, 5e-6, -680.0, 8.0)]
    return build_graph(dets, 2, 1e-6, 100.0, 256)


def test_estimate_from_labels():
    g = graph()
    est, ok = estimate_from_labels(g, np.array([0, 0, 3]), 3)
    assert ok.tolist() == [True, False, False]
    assert est[0] == pytest.approx([1.025e-6, 120.0])
    assert np.isnan(est[1]).all()


def test_record_uses_window_index():
    rec = record_from_predictions([graph()], [np.array([1, 1, 2])], 3, 5)
    assert rec.available[:, 2].tolist() == [False, True, True]
    assert not rec.available[:, [0, 1, 3, 4]].any()


def test_evaluate_and_tables(tmp_path):
    truth = np.zeros((2, 4, 2))
    truth[:, :, 0] = 1e-6
    truth[:, :, 1] = 100.0
    rec = TrackRecord.empty(2, 4)
    rec.est[0] = truth[0] + [1e-7, 10.0]
    rec.available[0] = True
    m = evaluate("X", {0: rec}, {0: truth}, range(2, 4), 1e-7, 10.0)
    assert m.nmse_tau == pytest.approx(0.01) and m.nmse_nu == pytest.approx(0.01)
    assert m.rmse_tau_bins[0] == pytest.approx(1.0) and np.isnan(m.rmse_tau_bins[1])
    assert m.coverage == [1.0, 0.0]
    write_table(tmp_path / "n.csv", [m, MethodMetrics("Y", 0.5, 0.25, [], [], [])])
    rows = list(csv.reader(open(tmp_path / "n.csv")))
    assert rows[0] == ["Method", "NMSE_tau", "NMSE_nu"]
    assert rows[2] == ["Y", "0.5", "0.25"]
    write_rmse(tmp_path / "r.csv", [m])
    assert len(list(csv.reader(open(tmp_path / "r.csv")))) == 3
