#!/usr/bin/env python3
"""Prediction-horizon sweep on the default synthetic cohort.

Trains one nested-CV evaluation per horizon and writes metrics.csv plus the
AUC-vs-horizon curve under --out. The default grid covers the endpoints plus
the 600 s operating point; pass --horizons to override.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cbwear.reporting import write_line_chart_svg, write_metrics_csv
from cbwear.segmentation import Task
from cbwear.training import ModelConfig, TrainConfig, horizon_sweep

from run_detection import load_default_cohort


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizons", default="0,30,60,120,300,600,900,1200,1800")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--runs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="sweep_out")
    args = ap.parse_args()

    sessions = load_default_cohort(args.seed)
    horizons = [float(h) for h in args.horizons.split(",")]
    mc = ModelConfig(modality="fused", arch="resnet", fusion="concat")
    tc = TrainConfig(epochs=args.epochs, base_lr=1e-3, backbone_lr=1e-3,
                     seed=args.seed, runs=args.runs, folds=5, max_batches_per_epoch=12)
    results = horizon_sweep(sessions, Task.BINARY, horizons, mc, tc)

    rows, curve = [], []
    for res in results:
        rows.extend(res.metric_rows())
        agg = res.aggregate()["auc"]
        curve.append((res.horizon_s, agg["mean"]))
        print(f"H={res.horizon_s:6.0f} s  AUC {agg['mean']:.3f} +/- {agg['ci95']:.3f}")
    out = Path(args.out)
    write_metrics_csv(out / "metrics.csv", rows)
    write_line_chart_svg(out / "auc_vs_horizon.svg", [c[0] for c in curve],
                         [c[1] for c in curve], "AUC-ROC vs prediction horizon",
                         "horizon (s)", "AUC-ROC")
    print(f"wrote {out}/metrics.csv and {out}/auc_vs_horizon.svg")


if __name__ == "__main__":
    main()
