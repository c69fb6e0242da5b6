"""Synthetic bistatic scenes and their delay/Doppler ground truth.

A scene holds a static transmitter, a static receiver and a handful of
constant-velocity point scatterers.  Each target contributes one two-leg
propagation path Tx -> target -> Rx; an optional line-of-sight path
Tx -> Rx (zero Doppler) models the static channel component.

Doppler sign convention: ``nu = -f_c * d(tau)/dt``, so an approaching
target (shrinking bistatic range) has positive Doppler.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

C0 = 299_792_458.0
KMH = 1.0 / 3.6


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    initial_pos: tuple[float, float, float]
    velocity_kmh: tuple[float, float, float]
    gain_db: float = 0.0
    label: int = 0
    # optional per-window gain fluctuation, drawn uniformly from this range
    gain_db_range: tuple[float, float] | None = None

    @property
    def velocity(self) -> np.ndarray:
        """Velocity in m/s."""
        return np.asarray(self.velocity_kmh, dtype=float) * KMH


@dataclass(frozen=True)
class Scene:
    tx_pos: tuple[float, float, float]
    rx_pos: tuple[float, float, float]
    targets: tuple[Target, ...]
    carrier_freq: float = 5e9
    noise_power: float | None = None
    rng_seed: int = 0
    duration: float = 15.0
    los_gain_db: float | None = None

    def __post_init__(self):
        tx = np.asarray(self.tx_pos, dtype=float)
        rx = np.asarray(self.rx_pos, dtype=float)
        if tx.shape != (3,) or rx.shape != (3,):
            raise SceneError("tx_pos and rx_pos must be 3-vectors")
        if np.array_equal(tx, rx):
            raise SceneError("tx_pos and rx_pos coincide")
        if not self.carrier_freq > 0:
            raise SceneError(f"carrier_freq must be positive, got {self.carrier_freq}")
        if self.noise_power is not None and self.noise_power < 0:
            raise SceneError("noise_power must be non-negative")
        labels = sorted(t.label for t in self.targets)
        if labels != list(range(len(self.targets))):
            raise SceneError(f"target labels must be 0..N-1 without gaps, got {labels}")
        for t in self.targets:
            p0 = np.asarray(t.initial_pos, dtype=float)
            if p0.shape != (3,) or np.asarray(t.velocity_kmh).shape != (3,):
                raise SceneError("target position and velocity must be 3-vectors")
            if not np.all(np.isfinite(t.velocity)):
                raise SceneError(f"target {t.label} has non-finite velocity")
            if np.array_equal(p0, tx) or np.array_equal(p0, rx):
                raise SceneError(f"target {t.label} starts on the Tx or Rx")

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def target(self, c: int) -> Target:
        for t in self.targets:
            if t.label == c:
                return t
        raise SceneError(f"invalid target index {c}")

    @property
    def baseline_delay(self) -> float:
        return float(np.linalg.norm(np.subtract(self.tx_pos, self.rx_pos)) / C0)


def target_position(scene: Scene, c: int, t: float) -> np.ndarray:
    if t < 0 or t > scene.duration:
        raise SceneError(f"time {t} outside [0, {scene.duration}]")
    tgt = scene.target(c)
    return np.asarray(tgt.initial_pos, dtype=float) + tgt.velocity * t


def bistatic_delay_doppler(pos, vel, tx, rx, carrier_freq: float) -> tuple[float, float]:
    """Two-leg delay and Doppler of a point scatterer at ``pos`` moving with ``vel`` (m/s)."""
    to_tx = np.asarray(pos, dtype=float) - np.asarray(tx, dtype=float)
    to_rx = np.asarray(pos, dtype=float) - np.asarray(rx, dtype=float)
    d_tx = np.linalg.norm(to_tx)
    d_rx = np.linalg.norm(to_rx)
    if d_tx == 0.0 or d_rx == 0.0:
        raise SceneError("scatterer coincides with Tx or Rx")
    tau = (d_tx + d_rx) / C0
    range_rate = vel @ (to_tx / d_tx) + vel @ (to_rx / d_rx)
    return float(tau), float(-carrier_freq / C0 * range_rate)


def ground_truth(scene: Scene, c: int, t: float) -> tuple[float, float]:
    """Bistatic delay (s) and Doppler (Hz) of target ``c`` at time ``t``."""
    p = target_position(scene, c, t)
    try:
        return bistatic_delay_doppler(p, scene.target(c).velocity, scene.tx_pos, scene.rx_pos, scene.carrier_freq)
    except SceneError:
        raise SceneError(f"target {c} coincides with Tx or Rx at t={t}") from None


def ground_truth_table(scene: Scene, times) -> np.ndarray:
    """Array of shape (n_targets, len(times), 2) holding (tau, nu)."""
    out = np.empty((scene.n_targets, len(times), 2))
    for c in range(scene.n_targets):
        for i, t in enumerate(times):
            out[c, i] = ground_truth(scene, c, t)
    return out


def random_scene(
    seed: int,
    n_targets: int = 3,
    speed_kmh: tuple[float, float] = (10.0, 15.0),
    area: float = 300.0,
    gain_db: tuple[float, float] = (-5.0, 0.0),
    carrier_freq: float = 5e9,
    noise_power: float | None = None,
    duration: float = 15.0,
    los_gain_db: float | None = None,
    tx_height: float = 10.0,
    rx_height: float = 10.0,
    target_height: float = 1.5,
    min_separation: float = 30.0,
    resolution: tuple[float, float] | None = None,
    min_bin_separation: float = 0.0,
    gain_spread_db: float = 0.0,
) -> Scene:
    """Draw a scene with random Tx/Rx/target placement and headings.

    Targets move in the horizontal plane.  Placement is rejection-sampled
    so that targets stay ``min_separation`` meters from Tx, Rx and from each
    other over the whole track.  With ``resolution = (delay_res,
    doppler_res)`` given, every pair of targets must also stay at least
    ``min_bin_separation`` bins apart (Chebyshev distance in delay-Doppler
    bins) throughout.  A positive ``gain_spread_db`` makes each target's gain
    fluctuate per window, uniformly in ``[gain_db - spread, gain_db]``.
    """
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, duration, 31)
    tx = np.array([*rng.uniform(0, area, 2), tx_height])
    while True:
        rx = np.array([*rng.uniform(0, area, 2), rx_height])
        if np.linalg.norm(rx[:2] - tx[:2]) > area / 3:
            break
    targets: list[Target] = []
    tracks: list[np.ndarray] = []
    dd_tracks: list[np.ndarray] = []
    for _ in range(20_000):
        if len(targets) == n_targets:
            break
        p0 = np.array([*rng.uniform(0, area, 2), target_height])
        speed = rng.uniform(*speed_kmh)
        heading = rng.uniform(0, 2 * np.pi)
        v_kmh = np.array([speed * np.cos(heading), speed * np.sin(heading), 0.0])
        track = p0[None, :] + times[:, None] * v_kmh[None, :] * KMH
        if np.min(np.linalg.norm(track[:, :2] - tx[:2], axis=1)) < min_separation:
            continue
        if np.min(np.linalg.norm(track[:, :2] - rx[:2], axis=1)) < min_separation:
            continue
        if any(np.min(np.linalg.norm(track - other, axis=1)) < min_separation for other in tracks):
            continue
        if resolution is not None:
            dd = np.array([bistatic_delay_doppler(q, v_kmh * KMH, tx, rx, carrier_freq) for q in track])
            dd /= np.asarray(resolution, dtype=float)
            if any(np.min(np.max(np.abs(dd - other), axis=1)) < min_bin_separation for other in dd_tracks):
                continue
            dd_tracks.append(dd)
        tracks.append(track)
        g = float(rng.uniform(*gain_db))
        targets.append(
            Target(
                initial_pos=tuple(float(x) for x in p0),
                velocity_kmh=tuple(float(x) for x in v_kmh),
                gain_db=g,
                label=len(targets),
                gain_db_range=(g - gain_spread_db, g) if gain_spread_db > 0 else None,
            )
        )
    else:
        raise SceneError("could not place targets; relax min_separation or enlarge area")
    return Scene(
        tx_pos=tuple(float(x) for x in tx),
        rx_pos=tuple(float(x) for x in rx),
        targets=tuple(targets),
        carrier_freq=carrier_freq,
        noise_power=noise_power,
        rng_seed=int(seed),
        duration=duration,
        los_gain_db=los_gain_db,
    )


# -- serialization ---------------------------------------------------------

_TARGET_KEYS = {"initial_pos", "velocity_kmh", "gain_db", "label", "gain_db_range"}
_SCENE_KEYS = {
    "tx_pos", "rx_pos", "targets", "carrier_freq", "noise_power",
    "rng_seed", "duration", "los_gain_db",
}


def _vec(x) -> tuple[float, ...]:
    return tuple(float(v) for v in x)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "tx_pos": list(scene.tx_pos),
        "rx_pos": list(scene.rx_pos),
        "carrier_freq": scene.carrier_freq,
        "noise_power": scene.noise_power,
        "rng_seed": scene.rng_seed,
        "duration": scene.duration,
        "los_gain_db": scene.los_gain_db,
        "targets": [
            {
                "label": t.label,
                "initial_pos": list(t.initial_pos),
                "velocity_kmh": list(t.velocity_kmh),
                "gain_db": t.gain_db,
                "gain_db_range": None if t.gain_db_range is None else list(t.gain_db_range),
            }
            for t in scene.targets
        ],
    }


def scene_from_dict(d: dict) -> Scene:
    unknown = set(d) - _SCENE_KEYS
    if unknown:
        raise SceneError(f"unknown scene keys: {sorted(unknown)}")
    targets = []
    for td in d.get("targets", []):
        bad = set(td) - _TARGET_KEYS
        if bad:
            raise SceneError(f"unknown target keys: {sorted(bad)}")
        rng = td.get("gain_db_range")
        targets.append(
            Target(
                initial_pos=_vec(td["initial_pos"]),
                velocity_kmh=_vec(td["velocity_kmh"]),
                gain_db=float(td.get("gain_db", 0.0)),
                label=int(td["label"]),
                gain_db_range=None if rng is None else _vec(rng),
            )
        )
    targets.sort(key=lambda t: t.label)
    noise = d.get("noise_power")
    los = d.get("los_gain_db")
    return Scene(
        tx_pos=_vec(d["tx_pos"]),
        rx_pos=_vec(d["rx_pos"]),
        targets=tuple(targets),
        carrier_freq=float(d.get("carrier_freq", 5e9)),
        noise_power=None if noise is None else float(noise),
        rng_seed=int(d.get("rng_seed", 0)),
        duration=float(d.get("duration", 15.0)),
        los_gain_db=None if los is None else float(los),
    )


def dump_scene(scene: Scene) -> str:
    return yaml.safe_dump(scene_to_dict(scene), sort_keys=False, default_flow_style=None)


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(dump_scene(scene))


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(yaml.safe_load(Path(path).read_text()))
