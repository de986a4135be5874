"""Command-line pipeline: synth, ingest, preprocess, train, eval, sweep,
explain, and report stages.

Every stage is idempotent: outputs are stamped with a provenance hash of the
relevant config sections plus the upstream stage's provenance, and a rerun
with an unchanged signature is skipped. All outputs live under --out.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA, RunConfig, flag_for, load_config
from .data import BehaviorTaxonomy, DatasetManifest
from .errors import CbwearError, MissingInput, UntrainedModel
from .interpret import grad_cam, modality_baselines, summarize_shapley
from .metrics import mean_ci95
from .nn.checkpoint import load_into, read_manifest, save_model
from .nn.core import rng_for
from .pipeline import (
    Normalizer,
    build_dataset,
    ingest_manifest,
    load_sessions,
    modality_inputs,
    preprocess_recording,
    save_sessions,
)
from .preprocess import eda_decompose
from .protocol import nested_cv_splits
from .reporting import (
    read_metrics_csv,
    write_cam_svg,
    write_confusion_svg,
    write_line_chart_svg,
    write_metrics_csv,
    write_shap_csv,
    write_splits_csv,
    write_summary_json,
    write_tonic_csv,
    write_windows_csv,
)
from .segmentation import LabelSpec, Task
from .training import (
    FoldResult,
    ModelConfig,
    TrainConfig,
    build_model,
    evaluate_protocol,
    predict_probs,
    train_fold,
)

STAGES = ["synth", "ingest", "preprocess", "train", "eval", "sweep", "explain", "report"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbwear",
        description="Multimodal wearable pipeline for challenging-behavior "
                    "detection and prediction (synthetic-cohort verified)",
    )
    parser.add_argument("--version", action="version", version=f"cbwear {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate the synthetic cohort",
        "ingest": "parse and quality-screen the cohort",
        "preprocess": "decompose EDA and index windows",
        "train": "train one model on the first nested-CV split",
        "eval": "full nested-CV evaluation at one horizon",
        "sweep": "repeat eval across the horizon grid",
        "explain": "modality attribution and activation maps",
        "report": "re-render report files from metrics.csv",
    }
    for name in STAGES:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", default=None, help="path to a section.key = value file")
        for key in SCHEMA:
            _, default, _, help_text = SCHEMA[key]
            p.add_argument(flag_for(key), dest=key.replace(".", "__"), default=None,
                           metavar="V", help=f"{help_text} (default {default})")
        if name == "preprocess":
            p.add_argument("--dump-tonic", default=None, metavar="CSV",
                           help="write t_s,tonic_uS,phasic_uS for the first session")
            p.add_argument("--windows", default=None, metavar="CSV",
                           help="dump labeled windows at the configured horizon")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {}
    for key in SCHEMA:
        v = getattr(args, key.replace(".", "__"), None)
        if v is not None:
            overrides[key] = v
    return load_config(args.config, overrides)


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _stage_dir(cfg: RunConfig, stage: str) -> Path:
    return Path(cfg["run.out"]) / stage


def _signature(cfg: RunConfig, stage: str, sections: list[str], upstream: list[str]):
    echo = {k: v for k, v in cfg.echo().items()
            if any(k.startswith(s + ".") for s in sections)}
    ups = {}
    for u in upstream:
        prov = _stage_dir(cfg, u) / "provenance.json"
        if not prov.exists():
            raise MissingInput(u)
        ups[u] = json.loads(prov.read_text())["signature"]
    return {"stage": stage, "config": echo, "upstream": ups,
            "signature": _hash({"stage": stage, "config": echo, "upstream": ups})}


def _is_current(stage_dir: Path, sig: dict) -> bool:
    prov = stage_dir / "provenance.json"
    if not prov.exists():
        return False
    return json.loads(prov.read_text()).get("signature") == sig["signature"]


def _finish(stage_dir: Path, sig: dict, outputs: list[str]):
    stage_dir.mkdir(parents=True, exist_ok=True)
    doc = dict(sig)
    doc["outputs"] = sorted(outputs)
    (stage_dir / "provenance.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _synth_config(cfg: RunConfig):
    from .synth import SynthConfig

    return SynthConfig(
        n_subjects=cfg["synth.n_subjects"],
        sessions_per_subject=cfg.sessions_per_subject(),
        session_minutes=cfg["synth.session_minutes"],
        rate_stereotypy=cfg["synth.rate_stereotypy"],
        rate_sib=cfg["synth.rate_sib"],
        rate_aggression=cfg["synth.rate_aggression"],
        event_duration_s=(cfg["synth.event_duration_min_s"], cfg["synth.event_duration_max_s"]),
        precursor_lead_s=cfg["synth.precursor_lead_s"],
        accel_strength=cfg["synth.accel_strength"],
        eda_strength=cfg["synth.eda_strength"],
        temp_strength=cfg["synth.temp_strength"],
        accel_noise=cfg["synth.accel_noise"],
        eda_noise=cfg["synth.eda_noise"],
        temp_noise=cfg["synth.temp_noise"],
        seed=cfg.seed_for("synth.seed"),
    )


def _model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(
        modality=cfg["model.modality"], arch=cfg["model.arch"], fusion=cfg["model.fusion"],
        vit_dim=cfg["model.vit_dim"], vit_depth=cfg["model.vit_depth"],
        vit_heads=cfg["model.vit_heads"], vit_mlp_dim=cfg["model.vit_mlp_dim"],
        patch_len=cfg["model.patch_len"], fused_seq_len=cfg["model.fused_seq_len"],
        mlp_hidden=cfg["model.mlp_hidden"], mlp_layers=cfg["model.mlp_layers"],
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"],
        base_lr=cfg["train.base_lr"], backbone_lr=cfg["train.backbone_lr"],
        weight_decay=cfg["train.weight_decay"], label_ratio=cfg["train.label_ratio"],
        seed=cfg.seed_for("train.seed"), runs=cfg["train.runs"], folds=cfg["train.folds"],
        max_batches_per_epoch=cfg["train.max_batches_per_epoch"],
        eval_batch_size=cfg["train.eval_batch_size"],
        pretrain_eda_epochs=cfg["train.pretrain_eda_epochs"],
        val_subsample=cfg["train.val_subsample"],
    )


def cmd_synth(cfg: RunConfig, args) -> int:
    from .synth import generate_cohort

    stage = _stage_dir(cfg, "synth")
    sig = _signature(cfg, "synth", ["synth", "run"], [])
    if _is_current(stage, sig):
        print("synth: up to date")
        return 0
    manifest = generate_cohort(_synth_config(cfg), stage)
    _finish(stage, sig, [str(manifest.name), "taxonomy.csv", "ground_truth.csv"])
    print(f"synth: wrote cohort under {stage}")
    return 0


def cmd_ingest(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "ingest")
    sig = _signature(cfg, "ingest", ["data"], ["synth"])
    if _is_current(stage, sig):
        print("ingest: up to date")
        return 0
    synth_dir = _stage_dir(cfg, "synth")
    manifest = DatasetManifest.from_csv(synth_dir / "manifest.csv")
    taxonomy = BehaviorTaxonomy.from_csv(synth_dir / "taxonomy.csv")
    accepted, reports = ingest_manifest(manifest, taxonomy,
                                        cfg["data.flatline_std_uS"], cfg["data.max_dropout_s"])
    stage.mkdir(parents=True, exist_ok=True)
    with open(stage / "screening.csv", "w", newline="", encoding="utf-8") as f:
        f.write("session_id,eda_std,flatline_fraction,max_dropout_s,verdict\n")
        for r in reports:
            f.write(f"{r.session_id},{repr(r.eda_std)},{repr(r.flatline_fraction)},"
                    f"{repr(r.max_dropout_s)},{r.verdict.value}\n")
    (stage / "accepted.json").write_text(json.dumps(
        [rec.session_id for rec, _ in accepted], indent=2) + "\n")
    _finish(stage, sig, ["screening.csv", "accepted.json"])
    print(f"ingest: {len(accepted)}/{len(reports)} sessions accepted")
    return 0


def _preprocess_one(payload):
    entry_idx, manifest_path, taxonomy_path, flatline, max_drop, lam, gate = payload
    manifest = DatasetManifest.from_csv(manifest_path)
    taxonomy = BehaviorTaxonomy.from_csv(taxonomy_path)
    sub = DatasetManifest([manifest.entries[entry_idx]])
    accepted, _ = ingest_manifest(sub, taxonomy, flatline, max_drop)
    if not accepted:
        return None
    rec, events = accepted[0]
    return preprocess_recording(rec, events, lam, gate)


def cmd_preprocess(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "preprocess")
    sig = _signature(cfg, "preprocess", ["preprocess", "data"], ["synth", "ingest"])
    dump_tonic = getattr(args, "dump_tonic", None)
    windows_csv = getattr(args, "windows", None)
    if _is_current(stage, sig) and not (dump_tonic or windows_csv):
        print("preprocess: up to date")
        return 0
    synth_dir = _stage_dir(cfg, "synth")
    manifest = DatasetManifest.from_csv(synth_dir / "manifest.csv")
    payloads = [(i, synth_dir / "manifest.csv", synth_dir / "taxonomy.csv",
                 cfg["data.flatline_std_uS"], cfg["data.max_dropout_s"],
                 cfg["preprocess.eda_lambda"], cfg["preprocess.gate_std_uS"])
                for i in range(len(manifest.entries))]
    jobs = cfg["run.jobs"]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            sessions = [s for s in pool.map(_preprocess_one, payloads) if s is not None]
    else:
        sessions = [s for s in map(_preprocess_one, payloads) if s is not None]
    stage.mkdir(parents=True, exist_ok=True)
    save_sessions(stage / "sessions.npz", sessions)
    if dump_tonic:
        from .data import load_recording

        rec = load_recording(manifest.entries[0])
        tp = eda_decompose(rec.eda, cfg["preprocess.eda_lambda"])
        t_s = np.arange(rec.n_samples) / rec.sample_rate_hz
        write_tonic_csv(dump_tonic, t_s, tp.tonic, tp.phasic)
    if windows_csv:
        spec = LabelSpec(horizon_s=cfg["label.horizon_s"], task=Task(cfg["label.task"]))
        ds = build_dataset(sessions, spec.horizon_s, spec)
        recs = [(ds.subjects[i], ds.session_ids([i])[0], float(ds.start_seconds([i])[0]),
                 ds.horizon_s, int(ds.y_class[i] != 0), int(ds.y_class[i]))
                for i in range(len(ds))]
        write_windows_csv(windows_csv, recs)
    _finish(stage, sig, ["sessions.npz"])
    n_rej = sum(s.n_rejected_flat for s in sessions)
    print(f"preprocess: {len(sessions)} sessions, {n_rej} windows gated out")
    return 0


def _load_preprocessed(cfg: RunConfig):
    path = _stage_dir(cfg, "preprocess") / "sessions.npz"
    if not path.exists():
        raise MissingInput("preprocess")
    return load_sessions(path)


def cmd_train(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "train")
    sig = _signature(cfg, "train", ["label", "model", "train"], ["preprocess"])
    if _is_current(stage, sig):
        print("train: up to date")
        return 0
    sessions = _load_preprocessed(cfg)
    task = Task(cfg["label.task"])
    tc = _train_config(cfg)
    mc = _model_config(cfg)
    spec = LabelSpec(horizon_s=cfg["label.horizon_s"], task=task)
    dataset = build_dataset(sessions, spec.horizon_s, spec)
    subjects = sorted({s.subject_id for s in sessions})
    split = nested_cv_splits(subjects, folds=4 if task is Task.FOUR_CLASS else tc.folds,
                             runs=1, seed=tc.seed)[0]
    fr = train_fold(dataset, split, task, mc, tc)
    stage.mkdir(parents=True, exist_ok=True)
    norm_stats = {name: {"min": s.min, "max": s.max}
                  for name, s in fr.normalizer.stats.items()}
    save_model(stage / "checkpoint.cbw", fr.model, {
        "model": mc.__dict__, "task": task.value, "horizon_s": dataset.horizon_s,
        "num_classes": task.n_classes, "normalizer": norm_stats,
        "split": {"train": list(split.train_subjects), "val": list(split.val_subjects),
                  "test": list(split.test_subjects)},
    })
    with open(stage / "curves.csv", "w", newline="", encoding="utf-8") as f:
        f.write("epoch,train_loss,val_auc\n")
        for epoch, loss, auc in fr.curves:
            f.write(f"{epoch},{repr(loss)},{repr(auc)}\n")
    _finish(stage, sig, ["checkpoint.cbw", "curves.csv"])
    print(f"train: best val AUC {max(c[2] for c in fr.curves):.3f} at epoch {fr.best_epoch}; "
          f"test AUC {fr.auc:.3f}")
    return 0


def _report_protocol(cfg: RunConfig, result, out_dir: Path, extra=None):
    task = result.task
    write_metrics_csv(out_dir / "metrics.csv", result.metric_rows())
    write_splits_csv(out_dir / "splits.csv", result.splits)
    write_confusion_svg(out_dir / f"confusion_{task.value}.svg", result.pooled_confusion(), task)
    write_summary_json(out_dir / "summary.json", task, result.aggregate(),
                       result.per_subject(), cfg.echo(), result.horizon_s,
                       skipped=result.skipped, extra=extra)


def _print_headline(result):
    agg = result.aggregate()
    print(f"task={result.task.value} horizon={result.horizon_s:g}s over {len(result.folds)} folds")
    for name in ("auc", "precision", "recall", "f1_macro"):
        a = agg[name]
        print(f"  {name:>9}: {a['mean']:.3f} +/- {a['ci95']:.3f}")


def cmd_eval(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "eval")
    sig = _signature(cfg, "eval", ["label", "model", "train"], ["preprocess"])
    report_dir = Path(cfg["run.out"]) / "report"
    if _is_current(stage, sig):
        print("eval: up to date")
        return 0
    sessions = _load_preprocessed(cfg)
    task = Task(cfg["label.task"])
    result = evaluate_protocol(sessions, task, cfg["label.horizon_s"],
                               _model_config(cfg), _train_config(cfg))
    _report_protocol(cfg, result, report_dir)
    _finish(stage, sig, ["../report/metrics.csv", "../report/summary.json"])
    _print_headline(result)
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "sweep")
    sig = _signature(cfg, "sweep", ["label", "model", "train", "eval"], ["preprocess"])
    report_dir = Path(cfg["run.out"]) / "report"
    if _is_current(stage, sig):
        print("sweep: up to date")
        return 0
    sessions = _load_preprocessed(cfg)
    task = Task(cfg["label.task"])
    mc, tc = _model_config(cfg), _train_config(cfg)
    rows, curve = [], []
    aggregates = {}
    for h in cfg.horizons():
        result = evaluate_protocol(sessions, task, float(h), mc, tc)
        rows.extend(result.metric_rows())
        agg = result.aggregate()
        aggregates[str(int(h))] = agg
        curve.append((float(h), agg["auc"]["mean"]))
        print(f"sweep: horizon {h:g}s AUC {agg['auc']['mean']:.3f} +/- {agg['auc']['ci95']:.3f}")
    write_metrics_csv(report_dir / "metrics.csv", rows)
    xs = [c[0] for c in curve]
    ys = [c[1] for c in curve]
    write_line_chart_svg(report_dir / "auc_vs_horizon.svg", xs, ys,
                         "AUC-ROC vs prediction horizon", "horizon (s)", "AUC-ROC")
    write_summary_json(report_dir / "summary.json", task, aggregates.get(
        str(int(xs[-1])), {}), {}, cfg.echo(), xs[-1],
        extra={"horizon_curve": {"horizon_s": xs, "auc_mean": ys},
               "per_horizon": aggregates})
    _finish(stage, sig, ["../report/metrics.csv", "../report/auc_vs_horizon.svg"])
    return 0


def cmd_explain(cfg: RunConfig, args) -> int:
    stage = _stage_dir(cfg, "explain")
    ckpt = _stage_dir(cfg, "train") / "checkpoint.cbw"
    if not ckpt.exists():
        raise UntrainedModel("no checkpoint found; run the train stage first")
    sig = _signature(cfg, "explain", ["interpret"], ["train", "preprocess"])
    report_dir = Path(cfg["run.out"]) / "report"
    if _is_current(stage, sig):
        print("explain: up to date")
        return 0
    spec = read_manifest(ckpt)["spec"]
    mc = ModelConfig(**spec["model"])
    if mc.modality != "fused":
        raise CbwearError("explain requires a fused checkpoint (model.modality = fused)")
    task = Task(spec["task"])
    model, _ = build_model(mc, spec["num_classes"], rng_for(0, "rebuild"))
    load_into(ckpt, model)
    from .preprocess import NormStats

    normalizer = Normalizer({name: NormStats(name, d["min"], d["max"])
                             for name, d in spec["normalizer"].items()})
    sessions = _load_preprocessed(cfg)
    dataset = build_dataset(sessions, spec["horizon_s"],
                            LabelSpec(horizon_s=spec["horizon_s"], task=task))
    subs = dataset.subjects
    train_idx = np.flatnonzero(np.isin(subs, spec["split"]["train"]))
    test_idx = np.flatnonzero(np.isin(subs, spec["split"]["test"]))
    rng = rng_for(cfg["interpret.sample_seed"], "explain")
    base_sample = train_idx[rng.permutation(train_idx.size)][:512]
    baselines = modality_baselines(model, dataset, base_sample, normalizer)

    # high-confidence positive test windows, sampled with --sample-seed
    probs = predict_probs(model, dataset, test_idx, normalizer, "fused")
    pos_score = probs[:, 1] if task is Task.BINARY else 1.0 - probs[:, 0]
    y = dataset.targets(task)
    pos_mask = (y[test_idx] != 0) & (pos_score >= np.median(pos_score))
    candidates = test_idx[pos_mask]
    if candidates.size == 0:
        candidates = test_idx
    picked = candidates[rng.permutation(candidates.size)][:cfg["interpret.n_shap_windows"]]

    target = 1 if task is Task.BINARY else int(np.argmax(probs.mean(axis=0)[1:]) + 1)
    summary = summarize_shapley(model, dataset, picked, normalizer, baselines, target)
    write_shap_csv(report_dir / "shap.csv", summary)
    shares = ", ".join(f"{m}={s:.3f}" for m, s in zip(summary["modalities"], summary["share"]))
    print(f"explain: attribution shares {shares} over {summary['n_samples']} windows")

    cam_picks = picked[:cfg["interpret.n_cam_samples"]]
    for k, i in enumerate(cam_picks):
        X = normalizer.apply(dataset.gather([i]))
        cam = grad_cam(model, modality_inputs(X, "fused"), target,
                       sample_id=f"{dataset.session_ids([i])[0]}@{dataset.start_seconds([i])[0]:.0f}s")
        accel_mag = np.linalg.norm(X[0, :, 0:3], axis=1)
        write_cam_svg(report_dir / f"cam_{k}.svg", accel_mag, cam.values, cam.sample_id)
    _finish(stage, sig, ["../report/shap.csv"])
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    report_dir = Path(cfg["run.out"]) / "report"
    metrics_path = report_dir / "metrics.csv"
    if not metrics_path.exists():
        raise MissingInput("eval")
    rows = read_metrics_csv(metrics_path)
    by_horizon: dict[float, list] = {}
    for r in rows:
        by_horizon.setdefault(r["horizon_s"], []).append(r)
    task = Task(rows[0]["task"])
    aggregates = {}
    for h, rs in sorted(by_horizon.items()):
        aggregates[str(int(h))] = {
            name: dict(zip(("mean", "ci95"), mean_ci95([r[name] for r in rs])),
                       n=len(rs))
            for name in ("auc", "precision", "recall", "f1_macro")
        }
    if len(by_horizon) > 1:
        xs = sorted(by_horizon)
        ys = [aggregates[str(int(h))]["auc"]["mean"] for h in xs]
        write_line_chart_svg(report_dir / "auc_vs_horizon.svg", xs, ys,
                             "AUC-ROC vs prediction horizon", "horizon (s)", "AUC-ROC")
    hy = sorted(by_horizon)[-1]
    write_summary_json(report_dir / "summary.json", task, aggregates[str(int(hy))],
                       {}, cfg.echo(), hy, extra={"per_horizon": aggregates})
    print(f"report: regenerated from {len(rows)} metric rows")
    return 0


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "preprocess": cmd_preprocess,
    "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
    "explain": cmd_explain, "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except CbwearError as e:
        print(f"ERROR {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"ERROR FileNotFound: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
