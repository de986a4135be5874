"""Run configuration: a flat `section.key = value` file format plus the
registry that maps every key to one CLI flag (and back).

Unknown keys are errors. `#` starts a comment; blank lines are ignored.
The effective configuration is echoed into every report. The env var
CH_SEED overrides run.seed; synth.seed and train.seed inherit run.seed
when left at -1.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import ConfigError

# key -> (type, default, flag, help)
SCHEMA: dict[str, tuple] = {
    "run.seed": (int, 0, "--seed", "root RNG seed (env CH_SEED overrides)"),
    "run.jobs": (int, 1, "--jobs", "worker parallelism across sessions"),
    "run.out": (str, "out", "--out", "output directory for all stages"),

    "synth.n_subjects": (int, 9, None, "number of synthetic subjects"),
    "synth.sessions_per_subject": (str, "2,1,2,1,2,1,2,1,1", None,
                                   "comma list, one session count per subject"),
    "synth.session_minutes": (float, 42.0, None, "session length in minutes"),
    "synth.rate_stereotypy": (float, 1.6, None, "stereotypy events per hour"),
    "synth.rate_sib": (float, 0.6, None, "SIB events per hour"),
    "synth.rate_aggression": (float, 0.3, None, "aggression events per hour"),
    "synth.event_duration_min_s": (float, 6.0, None, "min event duration"),
    "synth.event_duration_max_s": (float, 14.0, None, "max event duration"),
    "synth.precursor_lead_s": (float, 600.0, None, "precursor onset lead"),
    "synth.accel_strength": (float, 1.0, None, "accelerometer signature scale"),
    "synth.eda_strength": (float, 1.0, None, "EDA signature scale"),
    "synth.temp_strength": (float, 1.0, None, "temperature signature scale"),
    "synth.accel_noise": (float, 0.05, None, "accelerometer noise floor (g)"),
    "synth.eda_noise": (float, 0.01, None, "EDA measurement noise (uS)"),
    "synth.temp_noise": (float, 0.01, None, "temperature noise (degC)"),
    "synth.seed": (int, -1, None, "cohort seed; -1 inherits run.seed"),

    "data.flatline_std_uS": (float, 0.01, None, "session flatline threshold"),
    "data.max_dropout_s": (float, 5.0, None, "max tolerated ingestion gap"),

    "preprocess.eda_lambda": (float, 6400.0, None, "tonic smoothness weight"),
    "preprocess.gate_std_uS": (float, 0.01, None, "window-level tonic gate"),

    "label.horizon_s": (float, 0.0, "--horizon", "prediction horizon in seconds"),
    "label.task": (str, "binary", None, "binary | four_class | three_class_risk"),

    "model.modality": (str, "fused", None, "fused | accel | eda | temp"),
    "model.arch": (str, "resnet", "--arch", "accel encoder: resnet | dclstm | transformer"),
    "model.fusion": (str, "concat", "--fusion", "fusion head: concat | tvit | xvit"),
    "model.vit_dim": (int, 128, None, "ViT embedding width"),
    "model.vit_depth": (int, 2, None, "ViT encoder layers"),
    "model.vit_heads": (int, 4, None, "attention heads"),
    "model.vit_mlp_dim": (int, 256, None, "ViT MLP width"),
    "model.patch_len": (int, 10, None, "fused patch length (time steps)"),
    "model.fused_seq_len": (int, 50, None, "aligned sequence grid length"),
    "model.mlp_hidden": (int, 256, None, "concat-MLP hidden width"),
    "model.mlp_layers": (int, 3, None, "concat-MLP hidden layers"),

    "train.epochs": (int, 200, None, "training epochs"),
    "train.batch_size": (int, 64, None, "batch size"),
    "train.base_lr": (float, 1e-4, None, "learning rate for heads/temp"),
    "train.backbone_lr": (float, 1e-5, None, "learning rate for accel/EDA backbones"),
    "train.weight_decay": (float, 1e-5, None, "decoupled weight decay"),
    "train.label_ratio": (float, 1.5, None, "negative:positive batch ratio"),
    "train.runs": (int, 5, None, "cross-validation repetitions"),
    "train.folds": (int, 5, None, "cross-validation folds"),
    "train.max_batches_per_epoch": (int, 0, None, "0 = one pass over positives"),
    "train.eval_batch_size": (int, 256, None, "inference batch size"),
    "train.pretrain_eda_epochs": (int, 0, None, "autoencoder pretraining epochs"),
    "train.val_subsample": (int, 0, None, "cap validation windows (0 = all)"),
    "train.seed": (int, -1, None, "protocol seed; -1 inherits run.seed"),

    "eval.horizons": (str, "30,60,120,300,600,900,1200,1800", None,
                      "comma list of sweep horizons in seconds"),

    "interpret.n_shap_windows": (int, 32, None, "windows sampled for attribution"),
    "interpret.sample_seed": (int, 0, "--sample-seed", "window sampling seed"),
    "interpret.n_cam_samples": (int, 4, None, "activation maps to render"),
}


def flag_for(key: str) -> str:
    custom = SCHEMA[key][2]
    return custom if custom else f"--{key}"


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return self.values["run.seed"]

    def seed_for(self, key: str) -> int:
        v = self.values[key]
        return self.seed if v == -1 else v

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def echo(self) -> dict:
        return {k: self.values[k] for k in sorted(self.values)}

    def horizons(self) -> list[float]:
        return [float(h) for h in str(self.values["eval.horizons"]).split(",") if h.strip()]

    def sessions_per_subject(self) -> tuple:
        return tuple(int(x) for x in str(self.values["synth.sessions_per_subject"]).split(","))


def _convert(key: str, raw: str):
    typ = SCHEMA[key][0]
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {typ.__name__}")


def defaults() -> dict:
    return {k: spec[1] for k, spec in SCHEMA.items()}


def parse_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {line_no}", "expected `section.key = value`")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in SCHEMA:
                raise ConfigError(key)
            out[key] = _convert(key, raw.strip())
    return out


def load_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then CLI overrides, then CH_SEED."""
    values = defaults()
    if config_path:
        values.update(parse_config_file(config_path))
    for key, raw in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(key)
        values[key] = _convert(key, str(raw)) if not isinstance(raw, SCHEMA[key][0]) else raw
    env_seed = os.environ.get("CH_SEED")
    if env_seed is not None:
        values["run.seed"] = int(env_seed)
    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    checks = {
        "label.task": {"binary", "four_class", "three_class_risk"},
        "model.arch": {"resnet", "dclstm", "transformer"},
        "model.fusion": {"concat", "tvit", "xvit"},
        "model.modality": {"fused", "accel", "eda", "temp"},
    }
    for key, allowed in checks.items():
        if cfg[key] not in allowed:
            raise ConfigError(key, f"must be one of {sorted(allowed)}")
    if not 0.0 <= cfg["label.horizon_s"] <= 1800.0:
        raise ConfigError("label.horizon_s", "must lie in [0, 1800]")
    if len(cfg.sessions_per_subject()) != cfg["synth.n_subjects"]:
        raise ConfigError("synth.sessions_per_subject",
                          "must list one count per subject")
    if cfg["model.fused_seq_len"] % cfg["model.patch_len"]:
        raise ConfigError("model.patch_len", "must divide model.fused_seq_len")
