"""Report files: metrics CSV, JSON summary, and small hand-rolled SVG charts.

Everything written here is a pure function of inputs, with no timestamps or
environment-dependent content, so identical runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .metrics import row_normalize
from .segmentation import TASK_CLASS_NAMES, Task

METRIC_COLUMNS = ["run", "fold", "horizon_s", "task", "auc", "precision", "recall", "f1_macro"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_metrics_csv(path, rows):
    """rows: iterables matching METRIC_COLUMNS."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(METRIC_COLUMNS) + "\n")
        for r in rows:
            f.write(",".join(_fmt(v) for v in r) + "\n")


def read_metrics_csv(path):
    import csv

    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append({
                "run": int(row["run"]), "fold": int(row["fold"]),
                "horizon_s": float(row["horizon_s"]), "task": row["task"],
                "auc": float(row["auc"]), "precision": float(row["precision"]),
                "recall": float(row["recall"]), "f1_macro": float(row["f1_macro"]),
            })
    return out


def write_splits_csv(path, splits):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("run,fold,role,subject\n")
        for s in splits:
            for role, subs in (("train", s.train_subjects), ("val", s.val_subjects),
                               ("test", s.test_subjects)):
                for sub in subs:
                    f.write(f"{s.run_id},{s.fold_id},{role},{sub}\n")


def provenance_string(config_echo: dict, input_hashes: dict | None = None) -> str:
    payload = json.dumps({"config": config_echo, "inputs": input_hashes or {}},
                         sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def write_summary_json(path, task: Task, aggregates: dict, per_subject: dict,
                       config_echo: dict, horizon_s: float, skipped=(),
                       input_hashes: dict | None = None, extra: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "task": task.value,
        "horizon_s": horizon_s,
        "aggregates": aggregates,
        "per_subject": per_subject,
        "skipped_folds": list(skipped),
        "config": config_echo,
        "provenance": provenance_string(config_echo, input_hashes),
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def write_windows_csv(path, records):
    """records: (subject, session, start_s, horizon_s, label_binary, label_class)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("subject,session,start_s,horizon_s,label_binary,label_class\n")
        for r in records:
            f.write(",".join(_fmt(v) for v in r) + "\n")


def write_tonic_csv(path, t_s, tonic, phasic):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("t_s,tonic_uS,phasic_uS\n")
        for t, a, b in zip(t_s, tonic, phasic):
            f.write(f"{_fmt(float(t))},{_fmt(float(a))},{_fmt(float(b))}\n")


def write_shap_csv(path, summary: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("modality,phi_mean_abs,share\n")
        for name, mean_abs, share in zip(summary["modalities"], summary["phi_mean_abs"],
                                         summary["share"]):
            f.write(f"{name},{_fmt(float(mean_abs))},{_fmt(float(share))}\n")


# --- minimal SVG emitters -------------------------------------------------

def _svg_header(w, h):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">\n<rect width="{w}" height="{h}" fill="white"/>\n')


def write_line_chart_svg(path, xs, ys, title, xlabel, ylabel, w=640, h=420):
    """A single polyline with axis labels and point markers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    m = 60
    x0, x1 = (xs.min(), xs.max()) if xs.size else (0, 1)
    if x1 == x0:
        x1 = x0 + 1
    y0, y1 = 0.0, 1.0

    def px(x):
        return m + (x - x0) / (x1 - x0) * (w - 2 * m)

    def py(y):
        return h - m - (y - y0) / (y1 - y0) * (h - 2 * m)

    parts = [_svg_header(w, h)]
    parts.append(f'<text x="{w / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>\n')
    parts.append(f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>\n')
    parts.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>\n')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yv = y0 + frac * (y1 - y0)
        parts.append(f'<text x="{m - 8}" y="{py(yv) + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{yv:.2f}</text>\n')
        parts.append(f'<line x1="{m - 4}" y1="{py(yv):.1f}" x2="{m}" y2="{py(yv):.1f}" stroke="black"/>\n')
    for x in xs:
        parts.append(f'<text x="{px(x):.1f}" y="{h - m + 16}" text-anchor="middle" '
                     f'font-size="11">{x:g}</text>\n')
    parts.append(f'<text x="{w / 2:.1f}" y="{h - 12}" text-anchor="middle" font-size="13">{xlabel}</text>\n')
    parts.append(f'<text x="16" y="{h / 2:.1f}" text-anchor="middle" font-size="13" '
                 f'transform="rotate(-90 16 {h / 2:.1f})">{ylabel}</text>\n')
    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>\n')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="#1f77b4"/>\n')
    parts.append("</svg>\n")
    path.write_text("".join(parts), encoding="utf-8")


def write_confusion_svg(path, cm: np.ndarray, task: Task, w=480, h=440):
    """Row-normalized confusion heatmap with counts."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = TASK_CLASS_NAMES[task]
    n = len(names)
    rn = row_normalize(np.asarray(cm))
    m = 90
    cell_w = (w - m - 20) / n
    cell_h = (h - m - 40) / n
    parts = [_svg_header(w, h)]
    parts.append(f'<text x="{w / 2:.1f}" y="24" text-anchor="middle" font-size="15">'
                 f'Confusion matrix ({task.value}, row-normalized)</text>\n')
    for i in range(n):
        for j in range(n):
            v = rn[i, j]
            shade = int(255 - 175 * v)
            x = m + j * cell_w
            y = 50 + i * cell_h
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell_w:.1f}" '
                         f'height="{cell_h:.1f}" fill="rgb({shade},{shade},255)" '
                         f'stroke="black" stroke-width="0.5"/>\n')
            color = "black" if v < 0.6 else "white"
            parts.append(f'<text x="{x + cell_w / 2:.1f}" y="{y + cell_h / 2 - 4:.1f}" '
                         f'text-anchor="middle" font-size="12" fill="{color}">{v:.3f}</text>\n')
            parts.append(f'<text x="{x + cell_w / 2:.1f}" y="{y + cell_h / 2 + 12:.1f}" '
                         f'text-anchor="middle" font-size="10" fill="{color}">n={int(cm[i, j])}</text>\n')
    for i, name in enumerate(names):
        parts.append(f'<text x="{m - 6}" y="{50 + i * cell_h + cell_h / 2 + 4:.1f}" '
                     f'text-anchor="end" font-size="11">{name}</text>\n')
        parts.append(f'<text x="{m + i * cell_w + cell_w / 2:.1f}" y="{50 + n * cell_h + 16:.1f}" '
                     f'text-anchor="middle" font-size="11">{name}</text>\n')
    parts.append(f'<text x="{w / 2:.1f}" y="{h - 6}" text-anchor="middle" font-size="12">predicted</text>\n')
    parts.append("</svg>\n")
    path.write_text("".join(parts), encoding="utf-8")


def write_cam_svg(path, signal: np.ndarray, cam: np.ndarray, sample_id: str,
                  w=720, h=300):
    """Accelerometer magnitude trace overlaid on the activation heat strip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sig = np.asarray(signal, dtype=float)
    cam = np.asarray(cam, dtype=float)
    n = sig.size
    m = 50
    lo, hi = sig.min(), sig.max()
    if hi == lo:
        hi = lo + 1

    def px(i):
        return m + i / (n - 1) * (w - 2 * m)

    def py(v):
        return h - m - (v - lo) / (hi - lo) * (h - 2 * m - 30)

    parts = [_svg_header(w, h)]
    parts.append(f'<text x="{w / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
                 f'Activation map over window {sample_id}</text>\n')
    for i in range(n):
        shade = cam[i]
        if shade > 0:
            parts.append(f'<rect x="{px(i) - (w - 2 * m) / (2 * n):.2f}" y="30" '
                         f'width="{(w - 2 * m) / n:.2f}" height="{h - m - 30}" '
                         f'fill="rgba(255,0,0,{0.55 * shade:.3f})"/>\n')
    pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(sig))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4fd8" stroke-width="1.5"/>\n')
    parts.append("</svg>\n")
    path.write_text("".join(parts), encoding="utf-8")
