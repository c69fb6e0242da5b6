import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddtrack.channel import (
    CfrWindow, OfdmParams, PropPath, cfr_from_paths, path_set, read_cfr, synthesize_cfr, window_indices, write_cfr,
)
from ddtrack.scene import Scene, Target, ground_truth


SMALL = OfdmParams(subcarrier_spacing=15e3, n_subcarriers=32, symbols_per_window=24, window_gap=24, n_windows=4)


def test_default_bin_resolutions():
    p = OfdmParams()
    assert p.delay_resolution == pytest.approx(65.1e-9, rel=1e-3)
    # 1/(1400 / 15 kHz) without cyclic prefix
    assert p.doppler_resolution == pytest.approx(10.714285714, rel=1e-9)


def test_window_indices():
    p = OfdmParams(window_gap=1400, symbols_per_window=1400, n_windows=3)
    assert np.array_equal(window_indices(p, 0), np.arange(0, 1400))
    q = OfdmParams(window_gap=700, symbols_per_window=1400, n_windows=3)
    assert np.array_equal(window_indices(q, 2), np.arange(1400, 2800))
    with pytest.raises(IndexError):
        window_indices(q, 3)


@pytest.mark.parametrize("gap,n,K", [(700, 1400, 5), (1400, 1400, 4), (2000, 500, 3), (1, 8, 10)])
def test_last_window_end_matches_symbol_count(gap, n, K):
    p = OfdmParams(window_gap=gap, symbols_per_window=n, n_windows=K)
    covered = set()
    for k in range(K):
        covered.update(window_indices(p, k).tolist())
    last = window_indices(p, K - 1)[-1]
    assert last == (K - 1) * gap + n - 1
    assert last + 1 == p.total_symbols
    # windows overlap exactly when gap < n
    assert (len(covered) < K * n) == (gap < n)


def test_single_zero_path_is_all_ones():
    H = cfr_from_paths([PropPath(1.0, 0.0, 0.0)], SMALL, 0)
    assert np.array_equal(H, np.ones((32, 24)))


def test_no_paths_no_noise_is_zero():
    assert not cfr_from_paths([], SMALL, 1).any()


def test_delay_ramp_matches_direct_evaluation():
    tau = 10 * SMALL.delay_resolution
    H = cfr_from_paths([PropPath(1.0, tau, 0.0)], SMALL, 2)
    n = np.arange(32)
    ramp = np.exp(-2j * np.pi * n * 10 / 32)
    for m in range(24):
        assert np.allclose(H[:, m], ramp, atol=1e-12)


def test_per_entry_formula():
    paths = [PropPath(0.7 - 0.2j, 3.3e-7, 41.0), PropPath(0.1, 1.1e-6, -77.0)]
    k = 3
    H = cfr_from_paths(paths, SMALL, k)
    for n in (0, 5, 31):
        for m in (0, 7, 23):
            f = n * SMALL.subcarrier_spacing
            t = (k * SMALL.window_gap + m) * SMALL.t_sym
            ref = sum(p.alpha * np.exp(-2j * np.pi * f * p.tau) * np.exp(2j * np.pi * p.nu * t) for p in paths)
            assert H[n, m] == pytest.approx(ref, abs=1e-12)


path_st = st.builds(
    PropPath,
    alpha=st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
    tau=st.floats(0, 5e-6),
    nu=st.floats(-500, 500),
)


@settings(max_examples=30, deadline=None)
@given(a=st.lists(path_st, max_size=3), b=st.lists(path_st, max_size=3))
def test_linearity_and_magnitude_bound(a, b):
    Ha = cfr_from_paths(a, SMALL, 1)
    Hb = cfr_from_paths(b, SMALL, 1)
    assert np.allclose(cfr_from_paths(a + b, SMALL, 1), Ha + Hb, atol=1e-12)
    bound = sum(abs(p.alpha) for p in a)
    assert np.all(np.abs(Ha) <= bound + 1e-12)


def moving_scene(**kw):
    return Scene((0.0, 0.0, 10.0), (200.0, 0.0, 10.0),
                 (Target((80.0, 60.0, 1.5), (12.0, -5.0, 0.0), gain_db=-3.0),), **kw)


def test_paths_frozen_per_window_and_updated_between():
    sc = moving_scene()
    p0 = path_set(sc, SMALL, 0)[0]
    p1 = path_set(sc, SMALL, 1)[0]
    assert (p0.tau, p0.nu) == ground_truth(sc, 0, 0.0)
    assert (p1.tau, p1.nu) == ground_truth(sc, 0, SMALL.window_start_time(1))
    assert p1.tau != p0.tau
    assert abs(p0.alpha) == pytest.approx(10 ** (-3 / 20))


def test_los_path_has_zero_doppler():
    sc = moving_scene(los_gain_db=6.0)
    los = path_set(sc, SMALL, 2)[0]
    assert los.nu == 0.0 and los.tau == pytest.approx(200.0 / 299_792_458.0)


def test_noise_is_deterministic_per_seed_and_window():
    sc = moving_scene(noise_power=2.0, rng_seed=9)
    a = synthesize_cfr(sc, SMALL, 1).H
    b = synthesize_cfr(sc, SMALL, 1).H
    c = synthesize_cfr(sc, SMALL, 2).H
    assert np.array_equal(a, b)
    clean = synthesize_cfr(sc, SMALL, 1, noise=False).H
    noise = a - clean
    assert np.mean(np.abs(noise) ** 2) == pytest.approx(2.0, rel=0.3)
    assert not np.array_equal(a - clean, c - synthesize_cfr(sc, SMALL, 2, noise=False).H)


@pytest.mark.parametrize("dtype", [np.complex64, np.complex128])
def test_binary_dump_round_trip(tmp_path, dtype):
    H = (np.arange(12).reshape(3, 4) + 1j * np.arange(12).reshape(3, 4)[::-1]).astype(np.complex128)
    cfr = CfrWindow(H=H, window_index=5, start_symbol=7000)
    write_cfr(cfr, tmp_path / "w.bin", dtype=dtype)
    back = read_cfr(tmp_path / "w.bin")
    assert back.window_index == 5 and back.start_symbol == 7000
    assert np.array_equal(back.H, H)


def test_binary_dump_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError):
        read_cfr(tmp_path / "x.bin")
