"""Pipeline stages.  Each stage reads the previous stage's files under the
output directory and writes its own, so stages can be rerun or replaced
independently.

Layout::

    config.yaml
    scenes/scene_000.yaml
    ground_truth.csv                      s, c, k, tau_s, nu_hz
    sim/scene_000/dd_000.npy              delay-Doppler power (dB)
    sim/scene_000/cfr_000.bin             optional CFR dumps
    detections/scene_000.csv
    graphs/scene_000/graph_000.txt
    models/scene_000.npz, models/train_log.csv
    tracks_tgnn.csv, tracks_kf.csv
    report/nmse.csv, report/rmse.csv, report/*.png
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from . import baseline as bl
from .channel import OfdmParams, synthesize_cfr, write_cfr
from .config import ExperimentConfig, dump_config
from .ddmap import DDMap, delay_axis, delay_doppler_map, doppler_axis, plot_ddmap
from .detect import os_cfar_2d, read_detections, write_detections
from .graph import DDGraph, build_graph, label_nodes, read_graph, write_graph
from .metrics import MethodMetrics, evaluate, record_from_predictions, write_rmse, write_table
from .scene import Scene, ground_truth, load_scene, save_scene
from .tgnn import EvolveGCN, ModelConfig, load_model, predict, save_model, split_indices, train

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


# -- pure computations ---------------------------------------------------------


def truth_table(scene: Scene, ofdm: OfdmParams) -> np.ndarray:
    """Ground truth (C, K, 2) at each window start."""
    out = np.empty((scene.n_targets, ofdm.n_windows, 2))
    for c in range(scene.n_targets):
        for k in range(ofdm.n_windows):
            out[c, k] = ground_truth(scene, c, ofdm.window_start_time(k))
    return out


def label_graph(graph: DDGraph, truth_k: np.ndarray, cfg: ExperimentConfig) -> DDGraph:
    gd, gp = cfg.graph.gates
    return label_nodes(graph, truth_k, gd * cfg.ofdm.delay_resolution, gp * cfg.ofdm.doppler_resolution)


def make_graph(dets, k: int, cfg: ExperimentConfig) -> DDGraph:
    return build_graph(
        dets, k,
        cfg.graph.edge_delay_bins * cfg.ofdm.delay_resolution,
        cfg.graph.edge_doppler_bins * cfg.ofdm.doppler_resolution,
        cfg.ofdm.symbols_per_window,
    )


def model_config(cfg: ExperimentConfig, n_targets: int, seed: int) -> ModelConfig:
    return ModelConfig(n_classes=n_targets + 1, hidden=tuple(cfg.model.hidden),
                       decoder_hidden=cfg.model.decoder_hidden, seed=seed)


def eval_windows(cfg: ExperimentConfig) -> range:
    return split_indices(cfg.ofdm.n_windows, cfg.train.split)[2]


def run_kf(dets: dict, truth: np.ndarray, scene: Scene, cfg: ExperimentConfig) -> bl.TrackRecord:
    o = cfg.ofdm
    return bl.run_baseline(dets, truth[:, 0], o.n_windows, o.window_hop, scene.carrier_freq,
                           o.delay_resolution, o.doppler_resolution, cfg.baseline)


# -- file helpers ----------------------------------------------------------------


def _scene_dirs(out: Path) -> list[Path]:
    return sorted((out / "scenes").glob("scene_*.yaml"))


def _require(path: Path, stage: str, what: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"missing upstream artifact {path} ({what}); run the earlier stage first")
    return path


def _load_scenes(out: Path, stage: str) -> list[Scene]:
    files = _scene_dirs(out)
    if not files:
        raise StageError(stage, f"missing upstream artifact {out / 'scenes'} (scene files); run simulate first")
    return [load_scene(p) for p in files]


def _write_truth(out: Path, truths: list[np.ndarray]) -> None:
    with open(out / "ground_truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "c", "k", "tau_s", "nu_hz"])
        for s, tt in enumerate(truths):
            for c in range(tt.shape[0]):
                for k in range(tt.shape[1]):
                    w.writerow([s, c, k, repr(float(tt[c, k, 0])), repr(float(tt[c, k, 1]))])


def _read_truth(out: Path, stage: str, n_scenes: int, n_windows: int) -> list[np.ndarray]:
    rows = []
    with open(_require(out / "ground_truth.csv", stage, "ground truth"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    n_targets = [0] * n_scenes
    for r in rows:
        n_targets[int(r["s"])] = max(n_targets[int(r["s"])], int(r["c"]) + 1)
    truths = [np.full((n, n_windows, 2), np.nan) for n in n_targets]
    for r in rows:
        truths[int(r["s"])][int(r["c"]), int(r["k"])] = float(r["tau_s"]), float(r["nu_hz"])
    return truths


# -- stages -----------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg))
    except OSError as exc:
        raise StageError("simulate", f"cannot write to {out}: {exc}") from exc
    scenes = cfg.make_scenes()
    (out / "scenes").mkdir(exist_ok=True)
    truths = []
    for s, scene in enumerate(scenes):
        save_scene(scene, out / "scenes" / f"scene_{s:03d}.yaml")
        sim = out / "sim" / f"scene_{s:03d}"
        sim.mkdir(parents=True, exist_ok=True)
        for k in range(cfg.ofdm.n_windows):
            cfr = synthesize_cfr(scene, cfg.ofdm, k)
            if cfg.output.dump_cfr:
                write_cfr(cfr, sim / f"cfr_{k:03d}.bin")
            np.save(sim / f"dd_{k:03d}.npy", delay_doppler_map(cfr, cfg.ofdm).power)
        truths.append(truth_table(scene, cfg.ofdm))
    _write_truth(out, truths)
    log.info("simulated %d scenes x %d windows", len(scenes), cfg.ofdm.n_windows)


def _load_map(path: Path, k: int, cfg: ExperimentConfig) -> DDMap:
    power = np.load(path)
    return DDMap(power, None, delay_axis(cfg.ofdm), doppler_axis(cfg.ofdm), k)


def cmd_detect(cfg: ExperimentConfig, out: Path) -> None:
    scenes = _load_scenes(out, "detect")
    (out / "detections").mkdir(exist_ok=True)
    for s in range(len(scenes)):
        per = {}
        for k in range(cfg.ofdm.n_windows):
            p = _require(out / "sim" / f"scene_{s:03d}" / f"dd_{k:03d}.npy", "detect", "delay-Doppler map")
            dd = _load_map(p, k, cfg)
            if dd.shape != (cfg.ofdm.n_subcarriers, cfg.ofdm.symbols_per_window):
                raise StageError("detect", f"{p} has shape {dd.shape}, config expects "
                                 f"{(cfg.ofdm.n_subcarriers, cfg.ofdm.symbols_per_window)}")
            per[k] = os_cfar_2d(dd, cfg.cfar)
        write_detections(out / "detections" / f"scene_{s:03d}.csv", per)


def cmd_graph(cfg: ExperimentConfig, out: Path) -> None:
    scenes = _load_scenes(out, "graph")
    truths = _read_truth(out, "graph", len(scenes), cfg.ofdm.n_windows)
    for s in range(len(scenes)):
        dets = read_detections(_require(out / "detections" / f"scene_{s:03d}.csv", "graph", "detections"),
                               cfg.ofdm.n_windows)
        gdir = out / "graphs" / f"scene_{s:03d}"
        gdir.mkdir(parents=True, exist_ok=True)
        for k in range(cfg.ofdm.n_windows):
            g = label_graph(make_graph(dets[k], k, cfg), truths[s][:, k], cfg)
            write_graph(g, gdir / f"graph_{k:03d}.txt")


def _load_graphs(out: Path, s: int, cfg: ExperimentConfig, stage: str) -> list[DDGraph]:
    gdir = out / "graphs" / f"scene_{s:03d}"
    return [read_graph(_require(gdir / f"graph_{k:03d}.txt", stage, "graph snapshot"))
            for k in range(cfg.ofdm.n_windows)]


def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    scenes = _load_scenes(out, "train")
    (out / "models").mkdir(exist_ok=True)
    log_rows = []
    for s, scene in enumerate(scenes):
        graphs = _load_graphs(out, s, cfg, "train")
        model = EvolveGCN(model_config(cfg, scene.n_targets, cfg.seed * 1000 + s))
        res = train(model, graphs, cfg.train)
        save_model(model, out / "models" / f"scene_{s:03d}.npz", {"best_epoch": res.best_epoch})
        log_rows += [(s, e, a, b) for e, (a, b) in enumerate(zip(res.train_loss, res.val_loss))]
        log.info("scene %d: best epoch %d, val loss %.4f", s, res.best_epoch, min(res.val_loss))
    with open(out / "models" / "train_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scene", "epoch", "train_loss", "val_loss"])
        w.writerows([(s, e, repr(a), repr(b)) for s, e, a, b in log_rows])


def cmd_eval(cfg: ExperimentConfig, out: Path) -> None:
    scenes = _load_scenes(out, "eval")
    tw = eval_windows(cfg)
    records = {}
    for s, scene in enumerate(scenes):
        graphs = _load_graphs(out, s, cfg, "eval")
        mpath = out / "models" / f"scene_{s:03d}.npz"
        if mpath.exists():
            try:
                model, _ = load_model(mpath, model_config(cfg, scene.n_targets, 0))
            except ValueError as exc:
                raise StageError("eval", str(exc)) from exc
        else:
            log.warning("no model for scene %d; evaluating an untrained model", s)
            model = EvolveGCN(model_config(cfg, scene.n_targets, cfg.seed * 1000 + s))
        preds = predict(model, graphs, start=tw.start)
        records[s] = record_from_predictions(graphs[tw.start:], preds, scene.n_targets, cfg.ofdm.n_windows)
    bl.write_tracks(out / "tracks_tgnn.csv", records, windows=tw)


def cmd_baseline(cfg: ExperimentConfig, out: Path) -> None:
    scenes = _load_scenes(out, "baseline")
    truths = _read_truth(out, "baseline", len(scenes), cfg.ofdm.n_windows)
    records = {}
    for s, scene in enumerate(scenes):
        dets = read_detections(_require(out / "detections" / f"scene_{s:03d}.csv", "baseline", "detections"),
                               cfg.ofdm.n_windows)
        records[s] = run_kf(dets, truths[s], scene, cfg)
    bl.write_tracks(out / "tracks_kf.csv", records)


def compute_report(cfg: ExperimentConfig, out: Path) -> tuple[list[MethodMetrics], dict, dict, list[np.ndarray]]:
    scenes = _load_scenes(out, "report")
    K = cfg.ofdm.n_windows
    truths = _read_truth(out, "report", len(scenes), K)
    n_targets = max(s.n_targets for s in scenes)
    kf = bl.read_tracks(_require(out / "tracks_kf.csv", "report", "baseline tracks"), n_targets, K)
    tg = bl.read_tracks(_require(out / "tracks_tgnn.csv", "report", "EvolveGCN tracks"), n_targets, K)
    for recs in (kf, tg):
        for s in range(len(scenes)):
            recs.setdefault(s, bl.TrackRecord.empty(n_targets, K))
    truth = dict(enumerate(truths))
    tw = eval_windows(cfg)
    o = cfg.ofdm
    results = [
        evaluate("Kalman Filter", kf, truth, tw, o.delay_resolution, o.doppler_resolution),
        evaluate("EvolveGCN", tg, truth, tw, o.delay_resolution, o.doppler_resolution),
    ]
    return results, kf, tg, truths


def cmd_report(cfg: ExperimentConfig, out: Path) -> list[MethodMetrics]:
    results, kf, tg, truths = compute_report(cfg, out)
    rdir = out / "report"
    rdir.mkdir(exist_ok=True)
    write_table(rdir / "nmse.csv", results)
    write_rmse(rdir / "rmse.csv", results)
    if cfg.output.plots:
        _plots(cfg, out, rdir, results, kf, tg, truths)
    return results


def _plots(cfg, out, rdir, results, kf, tg, truths) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    o = cfg.ofdm
    tw = list(eval_windows(cfg))
    for comp, name, res in ((0, "delay", o.delay_resolution), (1, "doppler", o.doppler_resolution)):
        for s, tt in enumerate(truths):
            fig, ax = plt.subplots(figsize=(6, 3.5))
            for c in range(tt.shape[0]):
                line, = ax.plot(tw, tt[c, tw, comp] / res, "-", label=f"GT {c}")
                col = line.get_color()
                ax.plot(tw, kf[s].est[c, tw, comp] / res, "--", color=col, label=f"KF {c}")
                ax.plot(tw, tg[s].est[c, tw, comp] / res, "o", color=col, ms=4, label=f"EvolveGCN {c}")
            ax.set_xlabel("window k")
            ax.set_ylabel(f"{name} (bins)")
            ax.legend(fontsize=6, ncol=3)
            fig.tight_layout()
            fig.savefig(rdir / f"tracks_{name}_scene_{s:03d}.png", dpi=110)
            plt.close(fig)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    width = 0.8 / len(results)
    for i, r in enumerate(results):
        x = np.arange(len(r.rmse_tau_bins)) + i * width
        axes[0].bar(x, r.rmse_nu_bins, width, label=r.method)
        axes[1].bar(x, r.rmse_tau_bins, width, label=r.method)
    axes[0].set_title("Doppler RMSE (bins)")
    axes[1].set_title("delay RMSE (bins)")
    for ax in axes:
        ax.set_xlabel("target")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(rdir / "rmse.png", dpi=110)
    plt.close(fig)
    # first-window map of the first scene with its detections
    p = out / "sim" / "scene_000" / "dd_000.npy"
    if p.exists():
        dd = _load_map(p, 0, cfg)
        dets = read_detections(out / "detections" / "scene_000.csv", o.n_windows).get(0, [])
        plot_ddmap(dd, rdir / "ddmap_scene_000_k000.png", dets)


STAGES = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "graph": cmd_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "report": cmd_report,
}


def run_all(cfg: ExperimentConfig, out: Path) -> list[MethodMetrics]:
    for name in ("simulate", "detect", "graph", "train", "eval", "baseline"):
        log.info("stage %s", name)
        STAGES[name](cfg, out)
    return cmd_report(cfg, out)
