"""Seeded synthetic cohort with planted behavioral precursors.

Each session is 30 Hz accelerometry, EDA, and skin temperature with events
of the three behavior bins planted on physiologically shaped baselines:

* accel: pink-noise floor; during events, class-specific bursts (rhythmic
  2-4 Hz oscillation for stereotypy, sharp biexponential transients for
  aggression/SIB); from `precursor_lead_s` before each onset, the same class
  signature at reduced amplitude that ramps up (and, for oscillations,
  sweeps 1 to 3 Hz) toward the onset.
* EDA: slow tonic drift plus a skin-conductance-level elevation beginning
  with the precursor and SCR-shaped bumps (rise 0.75 s, decay 2 s) with
  1-3 s latency, recurring through the event.
* temp: slow sinusoidal drift with a small post-onset dip and slow recovery.

Everything is derived from per-session RNG streams, so generation is
bit-reproducible per seed. Ground truth (events, precursor starts) is
persisted for test oracles.

The generator exists to verify the software, not to make clinical claims.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .data import (
    AnnotationEvent,
    BehaviorTaxonomy,
    Recording,
    SensorLocation,
    TopBin,
    write_annotations,
    write_recording,
)
from .errors import InvalidConfig
from .nn.core import rng_for

RAW_NAMES = {
    TopBin.STEREOTYPY: ["motor stereotypies", "jumping", "dropping"],
    TopBin.SIB: ["self-injurious behavior", "hand bite", "self-injurious jump"],
    TopBin.AGGRESSION: ["aggression", "disruptive behavior"],
}

LOCATIONS = [SensorLocation.LEFT_ANKLE, SensorLocation.RIGHT_ANKLE,
             SensorLocation.LEFT_WRIST, SensorLocation.LEFT_ANKLE]


@dataclass(frozen=True)
class SynthConfig:
    """Defaults give a desk-scale cohort whose sessions are long enough for
    the 1800 s horizon and whose event rate keeps 600 s precursors mostly
    non-overlapping (rate * lead well under one)."""

    n_subjects: int = 9
    sessions_per_subject: tuple = (2, 1, 2, 1, 2, 1, 2, 1, 1)
    session_minutes: float = 42.0
    # events per hour per class, mirroring stereotypy >> SIB >> aggression
    rate_stereotypy: float = 1.6
    rate_sib: float = 0.6
    rate_aggression: float = 0.3
    event_duration_s: tuple = (6.0, 14.0)
    precursor_lead_s: float = 600.0
    accel_strength: float = 1.0
    eda_strength: float = 1.0
    temp_strength: float = 1.0
    accel_noise: float = 0.05
    eda_noise: float = 0.01
    temp_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.session_minutes <= 0:
            raise InvalidConfig("need at least one subject and a positive session length")
        if len(self.sessions_per_subject) != self.n_subjects:
            raise InvalidConfig("sessions_per_subject must list one count per subject")
        if self.precursor_lead_s < 0:
            raise InvalidConfig("precursor_lead_s must be >= 0")
        if min(self.rate_stereotypy, self.rate_sib, self.rate_aggression) < 0:
            raise InvalidConfig("event rates must be >= 0")


@dataclass(frozen=True)
class TruthEvent:
    subject_id: str
    session_id: str
    behavior_raw: str
    top: TopBin
    onset_s: float
    end_s: float
    precursor_start_s: float


def pink_noise(rng, n: int) -> np.ndarray:
    """Cheap 1/f-ish noise: white plus two one-pole lowpassed streams."""
    w = rng.standard_normal(n + 200)
    out = 0.5 * w.copy()
    for alpha, gain in ((0.95, 0.35), (0.995, 0.15)):
        one_m = 1.0 - alpha
        acc = scipy.signal.lfilter([one_m], [1.0, -alpha], w)
        out += gain * acc / one_m ** 0.5
    out = out[200:]
    return out / out.std()


def _biexp(t, rise, decay):
    """Difference-of-exponentials kernel, peak-normalized, zero for t < 0."""
    k = np.where(t >= 0, np.exp(-t / decay) - np.exp(-t / rise), 0.0)
    m = k.max()
    return k / m if m > 0 else k


def _session_event_count(rate: float, hours: float, ordinal: int) -> int:
    """Deterministic low-variance allocation: session k of the cohort gets
    floor((k+1) r) - floor(k r) events, averaging exactly rate * hours.
    Poisson counts would let a model read per-session event density off the
    signature density, leaking label prevalence across horizons."""
    r = rate * hours
    return int(np.floor((ordinal + 1) * r) - np.floor(ordinal * r))


def _place_events(rng, cfg: SynthConfig, duration_s: float,
                  ordinal: int) -> list[tuple[TopBin, float, float]]:
    hours = duration_s / 3600.0
    spans: list[tuple[float, float]] = []
    events = []
    for top, rate in ((TopBin.STEREOTYPY, cfg.rate_stereotypy),
                      (TopBin.SIB, cfg.rate_sib),
                      (TopBin.AGGRESSION, cfg.rate_aggression)):
        n = _session_event_count(rate, hours, ordinal)
        for _ in range(n):
            for _attempt in range(200):
                dur = rng.uniform(*cfg.event_duration_s)
                onset = rng.uniform(5.0, max(5.0, duration_s - dur - 5.0))
                if all(onset - 25.0 > e or onset + dur + 25.0 < s for s, e in spans):
                    spans.append((onset, onset + dur))
                    events.append((top, onset, onset + dur))
                    break
    events.sort(key=lambda e: e[1])
    return events


def _accel_signature(rng, t, top: TopBin, onset, end, lead, strength):
    """Class burst over [onset, end) plus the ramping precursor before it."""
    sig = np.zeros((t.size, 3))
    fs = 30.0
    amp_ev = strength * rng.uniform(0.8, 1.2)
    ev = (t >= onset) & (t < end)
    if top is TopBin.STEREOTYPY:
        f = rng.uniform(2.0, 4.0)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        for ax in range(3):
            sig[ev, ax] += amp_ev * rng.uniform(0.6, 1.0) * np.sin(
                2 * np.pi * f * t[ev] + phase[ax])
    else:
        n_spikes = max(1, int((end - onset) * rng.uniform(2.0, 4.0)))
        kernel_t = np.arange(0, 0.6, 1.0 / fs)
        kernel = _biexp(kernel_t, rise=0.03, decay=0.12)
        for _ in range(n_spikes):
            ts = rng.uniform(onset, end - 0.2)
            i0 = int(ts * fs)
            seg = slice(i0, min(i0 + kernel.size, t.size))
            ax_amp = amp_ev * rng.uniform(0.8, 1.6, size=3) * rng.choice([-1.0, 1.0], size=3)
            for ax in range(3):
                sig[seg, ax] += ax_amp[ax] * kernel[: seg.stop - seg.start]

    pre_start = max(0.0, onset - lead)
    pre = (t >= pre_start) & (t < onset)
    if pre.any() and lead > 0:
        progress = 1.0 - (onset - t[pre]) / lead  # 0 at lead start, 1 at onset
        amp = strength * (0.16 + 0.22 * progress)
        if top is TopBin.STEREOTYPY:
            freq = 1.0 + 2.0 * progress  # sweeps 1 -> 3 Hz toward onset
            phase = 2 * np.pi * np.cumsum(freq) / fs
            osc = np.sin(phase + rng.uniform(0, 2 * np.pi))
            for ax in range(3):
                sig[pre, ax] += amp * rng.uniform(0.6, 1.0) * osc
        else:
            jitter = rng.standard_normal((int(pre.sum()), 3))
            gate = (rng.random(int(pre.sum())) < (0.15 + 0.35 * progress)).astype(float)
            for ax in range(3):
                sig[pre, ax] += amp * 1.2 * jitter[:, ax] * gate
    return sig


def _eda_signature(rng, t, onset, end, lead, strength):
    sig = np.zeros(t.size)
    pre_start = max(0.0, onset - lead)
    latency = rng.uniform(1.0, 3.0)
    # skin-conductance-level elevation from the precursor through the event
    a_scl = strength * rng.uniform(0.3, 0.8)
    ramp = max(5.0, min(lead, 120.0))
    rel = t - (pre_start + latency)
    rise = np.clip(rel / ramp, 0.0, 1.0)
    decay = np.where(t > end, np.exp(-(t - end) / 40.0), 1.0)
    sig += a_scl * rise * decay
    # SCR train: first response after the latency, recurring through the event
    scr_t = pre_start + latency
    kernel_t = np.arange(0, 12.0, 1.0 / 30.0)
    kernel = _biexp(kernel_t, rise=0.75, decay=2.0)
    while scr_t < end:
        i0 = int(scr_t * 30.0)
        if i0 >= t.size:
            break
        seg = slice(i0, min(i0 + kernel.size, t.size))
        sig[seg] += strength * rng.uniform(0.15, 0.4) * kernel[: seg.stop - seg.start]
        scr_t += rng.uniform(4.0, 10.0) if scr_t >= onset else max((onset - scr_t) * 0.5, 4.0)
    return sig


def _temp_signature(rng, t, onset, end, strength):
    # post-arousal dip: fast drop, slow recovery
    rel = t - onset
    dip = np.where(rel >= 0, np.exp(-rel / 90.0) - np.exp(-rel / 15.0), 0.0)
    m = dip.max()
    if m > 0:
        dip = dip / m
    return -strength * rng.uniform(0.15, 0.35) * dip


def generate_session(cfg: SynthConfig, subject_idx: int, session_idx: int):
    """One seeded session: (Recording, [AnnotationEvent], [TruthEvent])."""
    subject_id = f"S{subject_idx + 1:02d}"
    session_id = f"{subject_id}_r{session_idx + 1:02d}"
    rng = rng_for(cfg.seed, "synth", subject_id, session_idx)
    sub_rng = rng_for(cfg.seed, "subject", subject_id)
    duration_s = cfg.session_minutes * 60.0
    n = int(round(duration_s * 30))
    t = np.arange(n) / 30.0

    accel = np.empty((n, 3))
    offsets = sub_rng.uniform(-0.3, 0.3, size=3) + np.array([0.0, 0.0, 0.9])
    for ax in range(3):
        accel[:, ax] = offsets[ax] + cfg.accel_noise * pink_noise(rng, n)

    eda_base = sub_rng.uniform(2.0, 5.0)
    # slow baseline wander plus spontaneous fluctuations fast enough that
    # 5 s tonic slices carry visible variability for the window gate
    eda = eda_base + cfg.eda_noise * rng.standard_normal(n)
    for period, amp in ((rng.uniform(500.0, 900.0), rng.uniform(0.2, 0.5)),
                        (rng.uniform(45.0, 90.0), rng.uniform(0.25, 0.4)),
                        (rng.uniform(20.0, 35.0), rng.uniform(0.06, 0.12))):
        eda += amp * np.sin(2 * np.pi * t / period + rng.uniform(0, 6))
    wander = scipy.signal.lfilter([0.02], [1.0, -0.98], rng.standard_normal(n + 600))[600:]
    eda += rng.uniform(0.10, 0.18) * wander / max(wander.std(), 1e-9)

    temp_base = sub_rng.uniform(32.0, 34.0)
    temp = (temp_base
            + rng.uniform(0.2, 0.4) * np.sin(2 * np.pi * t / rng.uniform(600, 1200) + rng.uniform(0, 6))
            + cfg.temp_noise * rng.standard_normal(n))

    placed = _place_events(rng, cfg, duration_s)
    annotations, truths = [], []
    for top, onset, end in placed:
        lead = cfg.precursor_lead_s
        accel += _accel_signature(rng, t, top, onset, end, lead, cfg.accel_strength)
        eda += _eda_signature(rng, t, onset, end, lead, cfg.eda_strength)
        temp += _temp_signature(rng, t, onset, end, cfg.temp_strength)
        raw = RAW_NAMES[top][rng.integers(0, len(RAW_NAMES[top]))]
        annotations.append(AnnotationEvent(raw, onset, end))
        truths.append(TruthEvent(subject_id, session_id, raw, top, onset, end,
                                 max(0.0, onset - lead)))

    rec = Recording(
        subject_id=subject_id,
        session_id=session_id,
        sensor_location=LOCATIONS[subject_idx % len(LOCATIONS)],
        sample_rate_hz=30,
        accel=accel,
        eda=np.maximum(eda, 0.05),  # conductance stays positive
        temp=temp,
    )
    return rec, annotations, truths


def iter_sessions(cfg: SynthConfig):
    for si in range(cfg.n_subjects):
        for ri in range(cfg.sessions_per_subject[si]):
            yield si, ri


def generate_cohort(cfg: SynthConfig, out_dir) -> Path:
    """Write the cohort to disk in the ingestion CSV contract plus
    ground_truth.csv for oracles. Returns the manifest path."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    BehaviorTaxonomy.default().to_csv(out / "taxonomy.csv")

    manifest_rows = []
    truth_rows = []
    for si, ri in iter_sessions(cfg):
        rec, annotations, truths = generate_session(cfg, si, ri)
        data_rel = f"data/{rec.session_id}.csv"
        ann_rel = f"annotations/{rec.session_id}.csv"
        write_recording(out / data_rel, rec)
        write_annotations(out / ann_rel, annotations)
        manifest_rows.append([rec.subject_id, rec.session_id,
                              rec.sensor_location.value, data_rel, ann_rel])
        truth_rows.extend(truths)

    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subject_id", "session_id", "sensor_location", "data_path", "annotation_path"])
        w.writerows(manifest_rows)
    with open(out / "ground_truth.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subject_id", "session_id", "behavior_raw", "top",
                    "onset_s", "end_s", "precursor_start_s"])
        for tr in truth_rows:
            w.writerow([tr.subject_id, tr.session_id, tr.behavior_raw, tr.top.value,
                        repr(float(tr.onset_s)), repr(float(tr.end_s)),
                        repr(float(tr.precursor_start_s))])
    return manifest


def load_ground_truth(path) -> list[TruthEvent]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(TruthEvent(row["subject_id"], row["session_id"], row["behavior_raw"],
                                  TopBin(row["top"]), float(row["onset_s"]), float(row["end_s"]),
                                  float(row["precursor_start_s"])))
    return out
