"""Best case for the graph tracker on a finished run: estimates built from the
ground-truth node labels instead of predicted ones, compared with the KF.

    python3 scripts/label_ceiling.py runs/desk
"""

import sys
from pathlib import Path

from ddtrack import baseline as bl
from ddtrack.config import load_config
from ddtrack.graph import read_graph
from ddtrack.metrics import evaluate, record_from_predictions
from ddtrack.pipeline import eval_windows, truth_table
from ddtrack.scene import load_scene


def main(out: Path):
    cfg = load_config(out / "config.yaml")
    o = cfg.ofdm
    scenes = [load_scene(p) for p in sorted((out / "scenes").glob("scene_*.yaml"))]
    tw = eval_windows(cfg)
    n_targets = max(s.n_targets for s in scenes)
    truth, oracle = {}, {}
    for s, scene in enumerate(scenes):
        truth[s] = truth_table(scene, o)
        graphs = [read_graph(out / "graphs" / f"scene_{s:03d}" / f"graph_{k:03d}.txt") for k in tw]
        oracle[s] = record_from_predictions(graphs, [g.labels for g in graphs], scene.n_targets, o.n_windows)
    kf = bl.read_tracks(out / "tracks_kf.csv", n_targets, o.n_windows)
    tg = bl.read_tracks(out / "tracks_tgnn.csv", n_targets, o.n_windows)
    print(f"{'Method':<22}{'NMSE_tau':>12}{'NMSE_nu':>12}   Doppler RMSE per target (bins)")
    for name, rec in (("true labels", oracle), ("Kalman Filter", kf), ("EvolveGCN", tg)):
        m = evaluate(name, rec, truth, tw, o.delay_resolution, o.doppler_resolution)
        print(f"{name:<22}{m.nmse_tau:>12.4g}{m.nmse_nu:>12.4g}   "
              + " ".join(f"{v:.2f}" for v in m.rmse_nu_bins))


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "runs/desk"))
