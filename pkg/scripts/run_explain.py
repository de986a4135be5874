#!/usr/bin/env python3
"""Train one fused fold on the default cohort, then report modality
attribution shares and render activation maps for sampled positive windows.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cbwear.interpret import grad_cam, modality_baselines, summarize_shapley
from cbwear.pipeline import build_dataset, modality_inputs
from cbwear.protocol import nested_cv_splits
from cbwear.reporting import write_cam_svg, write_shap_csv
from cbwear.segmentation import Task
from cbwear.training import ModelConfig, TrainConfig, train_fold

from run_detection import load_default_cohort


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sample-seed", type=int, default=0)
    ap.add_argument("--n-windows", type=int, default=32)
    ap.add_argument("--out", default="explain_out")
    args = ap.parse_args()

    sessions = load_default_cohort(args.seed)
    dataset = build_dataset(sessions, 0.0)
    subjects = sorted({s.subject_id for s in sessions})
    split = nested_cv_splits(subjects, 5, 1, seed=args.seed)[0]
    mc = ModelConfig(modality="fused", arch="resnet", fusion="concat")
    tc = TrainConfig(epochs=args.epochs, base_lr=1e-3, backbone_lr=1e-3,
                     seed=args.seed, max_batches_per_epoch=12)
    fr = train_fold(dataset, split, Task.BINARY, mc, tc)
    print(f"trained fold: test AUC {fr.auc:.3f}")

    subs = dataset.subjects
    rng = np.random.default_rng(args.sample_seed)
    train_idx = np.flatnonzero(np.isin(subs, split.train_subjects))
    test_idx = np.flatnonzero(np.isin(subs, split.test_subjects))
    baselines = modality_baselines(fr.model, dataset, train_idx[:512], fr.normalizer)
    pos_test = test_idx[dataset.targets(Task.BINARY)[test_idx] == 1]
    picked = pos_test[rng.permutation(pos_test.size)][:args.n_windows]
    summary = summarize_shapley(fr.model, dataset, picked, fr.normalizer, baselines)
    out = Path(args.out)
    write_shap_csv(out / "shap.csv", summary)
    for name, share in zip(summary["modalities"], summary["share"]):
        print(f"  {name}: share {share:.3f}")

    for k, i in enumerate(picked[:4]):
        X = fr.normalizer.apply(dataset.gather([i]))
        cam = grad_cam(fr.model, modality_inputs(X, "fused"), 1,
                       sample_id=dataset.session_ids([i])[0])
        write_cam_svg(out / f"cam_{k}.svg", np.linalg.norm(X[0, :, 0:3], axis=1),
                      cam.values, cam.sample_id)
    print(f"wrote {out}/shap.csv and activation maps")


if __name__ == "__main__":
    main()
