"""OFDM channel-frequency-response synthesis per observation window.

Window ``k`` covers symbols ``kP .. kP + N_sym - 1``.  Path delays and
Dopplers are evaluated once at the window start and held constant across
the window.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import Scene, ground_truth


@dataclass(frozen=True)
class OfdmParams:
    subcarrier_spacing: float = 15e3
    n_subcarriers: int = 1024
    symbols_per_window: int = 1400
    window_gap: int = 1400
    n_windows: int = 10
    symbol_duration: float | None = None  # defaults to 1/subcarrier_spacing

    def __post_init__(self):
        for name in ("n_subcarriers", "symbols_per_window", "window_gap", "n_windows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.symbol_duration is not None and not self.symbol_duration > 0:
            raise ValueError("symbol_duration must be positive")

    @property
    def t_sym(self) -> float:
        return 1.0 / self.subcarrier_spacing if self.symbol_duration is None else self.symbol_duration

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.n_subcarriers * self.subcarrier_spacing)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.symbols_per_window * self.t_sym)

    @property
    def window_hop(self) -> float:
        """Time between consecutive window starts, seconds."""
        return self.window_gap * self.t_sym

    def window_start_time(self, k: int) -> float:
        return k * self.window_gap * self.t_sym

    @property
    def total_symbols(self) -> int:
        return (self.n_windows - 1) * self.window_gap + self.symbols_per_window


@dataclass(frozen=True)
class PropPath:
    alpha: complex
    tau: float
    nu: float


@dataclass
class CfrWindow:
    H: np.ndarray  # (n_subcarriers, symbols_per_window)
    window_index: int
    start_symbol: int


def window_indices(params: OfdmParams, k: int) -> np.ndarray:
    if not 0 <= k < params.n_windows:
        raise IndexError(f"window {k} out of range [0, {params.n_windows})")
    start = k * params.window_gap
    return np.arange(start, start + params.symbols_per_window)


def path_set(scene: Scene, params: OfdmParams, k: int) -> list[PropPath]:
    """Propagation paths active in window ``k`` (frozen at the window start)."""
    t0 = params.window_start_time(k)
    rng = np.random.default_rng([scene.rng_seed, k, 1])
    paths = []
    if scene.los_gain_db is not None:
        paths.append(PropPath(10 ** (scene.los_gain_db / 20), scene.baseline_delay, 0.0))
    for tgt in scene.targets:
        g_db = tgt.gain_db if tgt.gain_db_range is None else rng.uniform(*tgt.gain_db_range)
        tau, nu = ground_truth(scene, tgt.label, t0)
        paths.append(PropPath(10 ** (g_db / 20), tau, nu))
    return paths


def cfr_from_paths(
    paths: list[PropPath], params: OfdmParams, k: int, noise_power: float | None = None, rng=None
) -> np.ndarray:
    n = np.arange(params.n_subcarriers)
    f = n * params.subcarrier_spacing
    t = window_indices(params, k) * params.t_sym
    H = np.zeros((params.n_subcarriers, params.symbols_per_window), dtype=np.complex128)
    for p in paths:
        if p.tau < 0 or not np.isfinite([p.tau, p.nu]).all():
            raise ValueError(f"invalid path {p}")
        H += p.alpha * np.outer(np.exp(-2j * np.pi * f * p.tau), np.exp(2j * np.pi * p.nu * t))
    if noise_power:
        rng = np.random.default_rng() if rng is None else rng
        w = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
        H += np.sqrt(noise_power / 2) * w
    return H


def synthesize_cfr(scene: Scene, params: OfdmParams, k: int, noise: bool = True) -> CfrWindow:
    paths = path_set(scene, params, k)
    rng = np.random.default_rng([scene.rng_seed, k, 0])
    H = cfr_from_paths(paths, params, k, scene.noise_power if noise else None, rng)
    return CfrWindow(H=H, window_index=k, start_symbol=k * params.window_gap)


# -- binary dump -----------------------------------------------------------
# header: magic, version, itemsize of the complex dtype, rows, cols, k, start symbol

_MAGIC = b"CFRW"
_HEADER = struct.Struct("<4sHBxIIiq")
_DTYPES = {8: np.complex64, 16: np.complex128}


def write_cfr(cfr: CfrWindow, path: str | Path, dtype=np.complex128) -> None:
    data = np.ascontiguousarray(cfr.H, dtype=dtype)
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, data.itemsize, rows, cols, cfr.window_index, cfr.start_symbol))
        fh.write(data.tobytes(order="C"))


def read_cfr(path: str | Path) -> CfrWindow:
    raw = Path(path).read_bytes()
    magic, version, itemsize, rows, cols, k, start = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1 or itemsize not in _DTYPES:
        raise ValueError(f"{path}: not a CFR dump")
    data = np.frombuffer(raw, dtype=_DTYPES[itemsize], offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return CfrWindow(H=data.reshape(rows, cols).astype(np.complex128), window_index=k, start_symbol=start)
