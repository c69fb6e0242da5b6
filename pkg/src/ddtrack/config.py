"""Experiment configuration: dataclasses, built-in profiles, YAML loading."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .baseline import BaselineParams, DbscanParams
from .channel import OfdmParams
from .detect import OsCfarParams
from .scene import Scene, random_scene, scene_from_dict, scene_to_dict
from .tgnn import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SceneGenConfig:
    n_scenes: int = 4
    n_targets: int = 3
    speed_kmh: tuple[float, float] = (10.0, 15.0)
    area: float = 300.0
    gain_db: tuple[float, float] = (-5.0, 0.0)
    carrier_freq: float = 5e9
    noise_power: float | None = None
    los_gain_db: float | None = None
    duration: float = 15.0
    min_separation: float = 30.0
    min_bin_separation: float = 0.0  # delay-Doppler Chebyshev distance between targets, bins
    gain_spread_db: float = 0.0  # per-window gain fluctuation below gain_db


@dataclass
class GraphConfig:
    edge_delay_bins: float = 9.0
    edge_doppler_bins: float = 9.0
    gate_delay_bins: float | None = None  # defaults to the edge threshold
    gate_doppler_bins: float | None = None

    @property
    def gates(self) -> tuple[float, float]:
        return (
            self.edge_delay_bins if self.gate_delay_bins is None else self.gate_delay_bins,
            self.edge_doppler_bins if self.gate_doppler_bins is None else self.gate_doppler_bins,
        )


@dataclass
class ModelParams:
    hidden: tuple[int, ...] = (64, 32)
    decoder_hidden: int = 32


@dataclass
class OutputConfig:
    dump_cfr: bool = False
    plots: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/desk"
    scenes: list[Scene] | None = None
    scene_gen: SceneGenConfig = field(default_factory=SceneGenConfig)
    ofdm: OfdmParams = field(default_factory=OfdmParams)
    cfar: OsCfarParams = field(default_factory=OsCfarParams)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelParams = field(default_factory=ModelParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: BaselineParams = field(default_factory=BaselineParams)
    output: OutputConfig = field(default_factory=OutputConfig)

    def make_scenes(self) -> list[Scene]:
        if self.scenes is not None:
            return list(self.scenes)
        g = self.scene_gen
        return [
            random_scene(
                seed=self.seed * 1000 + s,
                n_targets=g.n_targets,
                speed_kmh=g.speed_kmh,
                area=g.area,
                gain_db=g.gain_db,
                carrier_freq=g.carrier_freq,
                noise_power=g.noise_power,
                duration=g.duration,
                los_gain_db=g.los_gain_db,
                min_separation=g.min_separation,
                resolution=(self.ofdm.delay_resolution, self.ofdm.doppler_resolution),
                min_bin_separation=g.min_bin_separation,
                gain_spread_db=g.gain_spread_db,
            )
            for s in range(g.n_scenes)
        ]

    def validate(self) -> None:
        span = self.ofdm.window_start_time(self.ofdm.n_windows - 1)
        for s in self.make_scenes():
            if span > s.duration:
                raise ConfigError(f"last window starts at {span:.3f} s, beyond scene duration {s.duration} s")
        od, op = self.cfar.outer
        if self.ofdm.n_subcarriers <= 2 * od + 1 or self.ofdm.symbols_per_window <= 2 * op + 1:
            raise ConfigError("delay-Doppler map smaller than the CFAR window")


# Doppler/delay bins of the desk profile match the full-size profile: 256 of 1024
# subcarriers (every 4th) and 256 slow-time samples spread over the
# 1400-symbol window.
_DESK_T_SYM = 1400 / (256 * 15e3)

PROFILES: dict[str, dict] = {
    "paper": {
        "out_dir": "runs/paper",
        "ofdm": {"subcarrier_spacing": 15e3, "n_subcarriers": 1024, "symbols_per_window": 1400,
                 "window_gap": 1400, "n_windows": 160},
        "scene_gen": {"noise_power": 10.0, "los_gain_db": 10.0},
    },
    "desk": {
        "out_dir": "runs/desk",
        "ofdm": {"subcarrier_spacing": 60e3, "n_subcarriers": 256, "symbols_per_window": 256,
                 "window_gap": 1371, "n_windows": 30, "symbol_duration": _DESK_T_SYM},
        "scene_gen": {"noise_power": 10.0, "los_gain_db": 10.0, "area": 500.0, "min_bin_separation": 12.0},
    },
}


# -- dict <-> dataclass ------------------------------------------------------


def _coerce(tp, value, where: str):
    if value is None:
        return None
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where) if len(inner) == 1 else value
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, where)
    if origin is tuple:
        return tuple(_coerce(args[0], v, where) for v in value)
    if origin is list and args:
        return [_coerce(args[0], v, where) for v in value]
    if tp is float:
        return float(value)
    if tp is int:
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    return value


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def config_from_dict(data: dict, profile: str | None = None) -> ExperimentConfig:
    data = dict(data or {})
    named = data.pop("profile", None)
    for p in (named, profile):
        if p is not None and p not in PROFILES:
            raise ConfigError(f"unknown profile {p!r}; choose from {sorted(PROFILES)}")
    profile = named if profile is None else profile  # an explicit argument wins
    if profile is not None:
        data = _merge(PROFILES[profile], data)
    scenes = data.pop("scenes", None)
    cfg = _from_dict(ExperimentConfig, data, "config")
    if scenes is not None:
        cfg.scenes = [scene_from_dict(s) for s in scenes]
    cfg.validate()
    return cfg


def load_config(path: str | Path | None, profile: str | None = None) -> ExperimentConfig:
    data = {} if path is None else yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(data, profile)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(x):
        if dataclasses.is_dataclass(x):
            return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        return x

    d = {f.name: plain(getattr(cfg, f.name)) for f in dataclasses.fields(cfg) if f.name != "scenes"}
    if cfg.scenes is not None:
        d["scenes"] = [scene_to_dict(s) for s in cfg.scenes]
    return d


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


__all__ = [
    "ConfigError", "ExperimentConfig", "SceneGenConfig", "GraphConfig", "ModelParams", "OutputConfig",
    "PROFILES", "config_from_dict", "load_config", "config_to_dict", "dump_config",
    "OfdmParams", "OsCfarParams", "TrainConfig", "BaselineParams", "DbscanParams",
]
