"""Delay-Doppler map: IDFT over subcarriers, DFT over symbols.

Normalization: the frequency-axis inverse transform carries 1/N_FFT, the
time-axis forward transform is unnormalized.  An on-grid unit path thus
peaks at magnitude ``symbols_per_window``.  The Doppler axis is
fft-shifted so index ``N_nu // 2`` is 0 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import CfrWindow, OfdmParams

DB_FLOOR = -300.0


@dataclass
class DDMap:
    power: np.ndarray  # dB, (n_delay, n_doppler)
    complex_map: np.ndarray | None
    delay_axis: np.ndarray
    doppler_axis: np.ndarray
    window_index: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.power.shape

    @property
    def n_doppler(self) -> int:
        return self.power.shape[1]

    @property
    def linear_power(self) -> np.ndarray:
        return 10.0 ** (self.power / 10.0)


def delay_axis(params: OfdmParams) -> np.ndarray:
    return np.arange(params.n_subcarriers) * params.delay_resolution


def doppler_axis(params: OfdmParams) -> np.ndarray:
    n = params.symbols_per_window
    return (np.arange(n) - n // 2) * params.doppler_resolution


def to_db(x: np.ndarray) -> np.ndarray:
    mag = np.abs(x)
    with np.errstate(divide="ignore"):
        out = 20.0 * np.log10(mag)
    return np.maximum(out, DB_FLOOR)


def delay_doppler_map(cfr: CfrWindow, params: OfdmParams) -> DDMap:
    expected = (params.n_subcarriers, params.symbols_per_window)
    if cfr.H.shape != expected:
        raise ValueError(f"CFR shape {cfr.H.shape} does not match OFDM params {expected}")
    dd = np.fft.ifft(cfr.H, axis=0)
    dd = np.fft.fftshift(np.fft.fft(dd, axis=1), axes=1)
    return DDMap(
        power=to_db(dd),
        complex_map=dd,
        delay_axis=delay_axis(params),
        doppler_axis=doppler_axis(params),
        window_index=cfr.window_index,
    )


def save_power_csv(dd: DDMap, path: str | Path) -> None:
    """One row per delay bin, one column per Doppler bin, values in dB."""
    np.savetxt(path, dd.power, delimiter=",", fmt="%.6f")


def plot_ddmap(dd: DDMap, path: str | Path, detections=None, dynamic_range: float = 60.0) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    top = dd.power.max()
    extent = [dd.doppler_axis[0], dd.doppler_axis[-1], dd.delay_axis[-1] * 1e6, dd.delay_axis[0] * 1e6]
    im = ax.imshow(dd.power, aspect="auto", extent=extent, vmin=top - dynamic_range, vmax=top, cmap="viridis")
    if detections:
        ax.scatter([d.doppler for d in detections], [d.delay * 1e6 for d in detections],
                   s=6, facecolors="none", edgecolors="r", linewidths=0.6)
    ax.set_xlabel("Doppler (Hz)")
    ax.set_ylabel("delay (us)")
    ax.set_title(f"window {dd.window_index}")
    fig.colorbar(im, ax=ax, label="power (dB)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
