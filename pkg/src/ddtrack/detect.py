"""2-D ordered-statistics CFAR on delay-Doppler power maps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ddmap import DDMap


@dataclass(frozen=True)
class OsCfarParams:
    guard_delay: int = 2
    guard_doppler: int = 2
    train_delay: int = 8
    train_doppler: int = 8
    rank_fraction: float = 0.75
    scale: float | None = None  # alpha_os; derived from target_pfa when None
    target_pfa: float = 1e-4
    zero_doppler_mask_halfwidth: int = 2

    def __post_init__(self):
        if min(self.guard_delay, self.guard_doppler, self.train_delay, self.train_doppler) < 0:
            raise ValueError("guard/train extents must be non-negative")
        if self.n_train < 1:
            raise ValueError("training window is empty after guard exclusion")
        if not 0 < self.rank_fraction <= 1:
            raise ValueError("rank_fraction must lie in (0, 1]")
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.scale is None and not 0 < self.target_pfa < 1:
            raise ValueError("target_pfa must lie in (0, 1)")
        if self.zero_doppler_mask_halfwidth < -1:
            raise ValueError("zero_doppler_mask_halfwidth must be >= -1 (-1 disables)")

    @property
    def outer(self) -> tuple[int, int]:
        return self.guard_delay + self.train_delay, self.guard_doppler + self.train_doppler

    @property
    def n_train(self) -> int:
        od, op = self.outer
        return (2 * od + 1) * (2 * op + 1) - (2 * self.guard_delay + 1) * (2 * self.guard_doppler + 1)

    @property
    def k_os(self) -> int:
        k = int(math.floor(self.rank_fraction * self.n_train + 0.5))
        if not 1 <= k <= self.n_train:
            raise ValueError(f"order statistic rank {k} outside [1, {self.n_train}]")
        return k

    @property
    def alpha(self) -> float:
        if self.scale is not None:
            return self.scale
        return alpha_from_pfa(self.n_train, self.k_os, self.target_pfa)

    def footprint(self) -> np.ndarray:
        od, op = self.outer
        fp = np.ones((2 * od + 1, 2 * op + 1), dtype=bool)
        fp[od - self.guard_delay: od + self.guard_delay + 1, op - self.guard_doppler: op + self.guard_doppler + 1] = False
        return fp


@dataclass(frozen=True)
class Detection:
    delay_bin: int
    doppler_bin: int
    delay: float
    doppler: float
    power: float  # linear

    @property
    def power_db(self) -> float:
        return 10.0 * math.log10(self.power) if self.power > 0 else -300.0


def pfa_os(n_train: int, k_os: int, alpha: float) -> float:
    """False-alarm probability of OS-CFAR in i.i.d. exponential noise."""
    i = np.arange(k_os)
    return float(np.exp(np.sum(np.log(n_train - i) - np.log(n_train - i + alpha))))


def alpha_from_pfa(n_train: int, k_os: int, pfa: float) -> float:
    """Invert :func:`pfa_os` for the threshold multiplier by bisection."""
    if not 1 <= k_os <= n_train:
        raise ValueError(f"need 1 <= k_os <= n_train, got k_os={k_os}, n_train={n_train}")
    if not 0 < pfa < 1:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    log_target = math.log(pfa)

    def excess(a):
        return math.log(pfa_os(n_train, k_os, a)) - log_target

    lo, hi = 0.0, 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("no root in bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def noise_estimate(power: np.ndarray, params: OsCfarParams) -> np.ndarray:
    """k_os-th smallest training cell around every cell, with wrap-around edges."""
    od, op = params.outer
    if power.shape[0] <= 2 * od + 1 or power.shape[1] <= 2 * op + 1:
        raise ValueError(f"map {power.shape} too small for CFAR window {(2 * od + 1, 2 * op + 1)}")
    return ndimage.rank_filter(power, rank=params.k_os - 1, footprint=params.footprint(), mode="wrap")


def cfar_mask(power: np.ndarray, params: OsCfarParams) -> np.ndarray:
    """Boolean detection mask on a linear-power map (Doppler centered on axis 1)."""
    hit = power > params.alpha * noise_estimate(power, params)
    hw = params.zero_doppler_mask_halfwidth
    if hw >= 0:
        mid = power.shape[1] // 2
        hit[:, max(mid - hw, 0): mid + hw + 1] = False
    return hit


def os_cfar_2d(dd: DDMap, params: OsCfarParams) -> list[Detection]:
    lin = dd.linear_power
    rows, cols = np.nonzero(cfar_mask(lin, params))
    return [
        Detection(int(l), int(p), float(dd.delay_axis[l]), float(dd.doppler_axis[p]), float(lin[l, p]))
        for l, p in zip(rows, cols)
    ]


# -- CSV -------------------------------------------------------------------

DETECTION_COLUMNS = ("k", "l", "p", "tau_s", "nu_hz", "power_db")


def write_detections(path: str | Path, per_window: dict[int, list[Detection]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETECTION_COLUMNS)
        for k in sorted(per_window):
            for d in per_window[k]:
                w.writerow([k, d.delay_bin, d.doppler_bin, repr(d.delay), repr(d.doppler), repr(d.power_db)])


def read_detections(path: str | Path, n_windows: int | None = None) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {} if n_windows is None else {k: [] for k in range(n_windows)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["k"])
            out.setdefault(k, []).append(
                Detection(
                    int(row["l"]), int(row["p"]), float(row["tau_s"]), float(row["nu_hz"]),
                    10.0 ** (float(row["power_db"]) / 10.0),
                )
            )
    return out
