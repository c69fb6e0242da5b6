"""Retrain the per-scene models of a finished run with selected node-feature
columns zeroed and report test-window node accuracy.

    python3 scripts/feature_ablation.py runs/desk            # all variants
    python3 scripts/feature_ablation.py runs/desk id k       # one variant
"""

import sys
from pathlib import Path

import numpy as np

from ddtrack.config import load_config
from ddtrack.graph import FEATURE_NAMES, read_graph
from ddtrack.pipeline import model_config
from ddtrack.scene import load_scene
from ddtrack.tgnn import EvolveGCN, predict, split_indices, train


def accuracy(out, cfg, drop):
    cols = [FEATURE_NAMES.index(name) for name in drop]
    K = cfg.ofdm.n_windows
    _, _, te = split_indices(K, cfg.train.split)
    scores = []
    for s, path in enumerate(sorted((out / "scenes").glob("scene_*.yaml"))):
        scene = load_scene(path)
        graphs = [read_graph(out / "graphs" / f"scene_{s:03d}" / f"graph_{k:03d}.txt") for k in range(K)]
        for g in graphs:
            g.features[:, cols] = 0.0
        model = EvolveGCN(model_config(cfg, scene.n_targets, cfg.seed * 1000 + s))
        train(model, graphs, cfg.train)
        preds = predict(model, graphs)
        scores.append(np.mean(np.concatenate([preds[k] == graphs[k].labels for k in te])))
    return scores


def main(argv):
    out = Path(argv[0]) if argv else Path("runs/desk")
    cfg = load_config(out / "config.yaml")
    variants = [argv[1:]] if len(argv) > 1 else [[], ["id"], ["k"], ["id", "k"]]
    for drop in variants:
        scores = accuracy(out, cfg, drop)
        label = "none" if not drop else "+".join(drop)
        print(f"zeroed {label:<8} test accuracy per scene " + " ".join(f"{a:.3f}" for a in scores)
              + f"  mean {np.mean(scores):.3f}")


if __name__ == "__main__":
    main(sys.argv[1:])
