"""Canonical data model: recordings, annotations, behavior taxonomy, and
session-quality screening.

CSV contracts (UTF-8, LF, '.' decimal):
  recording:  t_s,acc_x,acc_y,acc_z,eda_uS,temp_C   (monotone t_s at 1/30 s)
  annotation: behavior,start_s,end_s                (half-open [start, end))
  manifest:   subject_id,session_id,sensor_location,data_path,annotation_path
  taxonomy:   raw,secondary,top
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChannelLengthMismatch,
    MalformedRow,
    SampleRateMismatch,
    UnknownBehavior,
)

SAMPLE_RATE_HZ = 30
RECORDING_HEADER = ["t_s", "acc_x", "acc_y", "acc_z", "eda_uS", "temp_C"]
CHANNEL_NAMES = ["acc_x", "acc_y", "acc_z", "eda", "temp"]


class SensorLocation(enum.Enum):
    LEFT_WRIST = "LeftWrist"
    RIGHT_WRIST = "RightWrist"
    LEFT_ANKLE = "LeftAnkle"
    RIGHT_ANKLE = "RightAnkle"


class TopBin(enum.Enum):
    AGGRESSION = "Aggression"
    SIB = "SIB"
    STEREOTYPY = "Stereotypy"


class Verdict(enum.Enum):
    ACCEPT = "Accept"
    REJECT_FLATLINE = "RejectFlatline"
    REJECT_DROPOUT = "RejectDropout"


@dataclass(frozen=True)
class Gap:
    start_s: float
    duration_s: float


@dataclass
class Recording:
    """Time-synchronized 30 Hz multimodal session. All channels share one
    length; missing samples were interpolated at ingestion and are listed
    in `gaps`, never left as NaN."""

    subject_id: str
    session_id: str
    sensor_location: SensorLocation
    sample_rate_hz: int
    accel: np.ndarray        # (L, 3), unit g, axis order x,y,z
    eda: np.ndarray          # (L,), microsiemens
    temp: np.ndarray         # (L,), degrees C
    start_epoch_s: float = 0.0
    gaps: list[Gap] = field(default_factory=list)

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=np.float64)
        self.eda = np.asarray(self.eda, dtype=np.float64)
        self.temp = np.asarray(self.temp, dtype=np.float64)
        L = self.accel.shape[0]
        if self.accel.ndim != 2 or self.accel.shape[1] != 3:
            raise ChannelLengthMismatch(f"accel must be (L, 3), got {self.accel.shape}")
        if self.eda.shape != (L,) or self.temp.shape != (L,):
            raise ChannelLengthMismatch(
                f"channel lengths differ: accel {L}, eda {self.eda.shape[0]}, temp {self.temp.shape[0]}")
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise SampleRateMismatch(f"expected {SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        for name, arr in (("accel", self.accel), ("eda", self.eda), ("temp", self.temp)):
            if not np.isfinite(arr).all():
                raise ChannelLengthMismatch(f"{name} contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.accel.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class AnnotationEvent:
    """A raw behavior interval, half-open [start_s, end_s)."""

    behavior_raw: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"event must have start < end, got [{self.start_s}, {self.end_s})")


# The eight operationalized behaviors, mapped raw -> secondary -> top bin.
DEFAULT_TAXONOMY_ROWS = [
    ("motor stereotypies", "stereotypy behavior", "Stereotypy"),
    ("aggression", "aggression behavior", "Aggression"),
    ("self-injurious behavior", "self-injurious behaviors", "SIB"),
    ("self-injurious jump", "self-injurious behaviors", "SIB"),
    ("hand bite", "self-injurious behaviors", "SIB"),
    ("dropping", "stereotypy behavior", "Stereotypy"),
    ("jumping", "stereotypy behavior", "Stereotypy"),
    ("disruptive behavior", "aggression behavior", "Aggression"),
]


@dataclass
class BehaviorTaxonomy:
    raw_to_secondary: dict[str, str]
    secondary_to_top: dict[str, TopBin]

    @classmethod
    def default(cls) -> "BehaviorTaxonomy":
        raw2sec = {r: s for r, s, _ in DEFAULT_TAXONOMY_ROWS}
        sec2top = {s: TopBin(t) for _, s, t in DEFAULT_TAXONOMY_ROWS}
        return cls(raw2sec, sec2top)

    @classmethod
    def from_csv(cls, path) -> "BehaviorTaxonomy":
        raw2sec: dict[str, str] = {}
        sec2top: dict[str, TopBin] = {}
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["raw", "secondary", "top"]:
                raise MalformedRow(1, f"taxonomy header must be raw,secondary,top, got {reader.fieldnames}")
            for i, row in enumerate(reader, start=2):
                raw, sec, top = row["raw"], row["secondary"], row["top"]
                if raw in raw2sec and raw2sec[raw] != sec:
                    raise MalformedRow(i, f"raw behavior {raw!r} maps to two secondaries")
                if sec in sec2top and sec2top[sec].value != top:
                    raise MalformedRow(i, f"secondary {sec!r} maps to two top bins")
                raw2sec[raw] = sec
                sec2top[sec] = TopBin(top)
        return cls(raw2sec, sec2top)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["raw", "secondary", "top"])
            for raw, sec in self.raw_to_secondary.items():
                w.writerow([raw, sec, self.secondary_to_top[sec].value])


def map_behavior(raw: str, taxonomy: BehaviorTaxonomy) -> TopBin:
    """Two-stage raw -> secondary -> top-bin mapping."""
    if raw not in taxonomy.raw_to_secondary:
        raise UnknownBehavior(raw)
    return taxonomy.secondary_to_top[taxonomy.raw_to_secondary[raw]]


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    session_id: str
    sensor_location: SensorLocation
    data_path: Path
    annotation_path: Path


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    taxonomy_path: Path | None = None

    def __post_init__(self):
        keys = [(e.subject_id, e.session_id) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("(subject_id, session_id) pairs must be unique")

    @classmethod
    def from_csv(cls, path, taxonomy_path=None) -> "DatasetManifest":
        base = Path(path).parent
        entries = []
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            expect = ["subject_id", "session_id", "sensor_location", "data_path", "annotation_path"]
            if reader.fieldnames != expect:
                raise MalformedRow(1, f"manifest header must be {','.join(expect)}")
            for row in reader:
                entries.append(ManifestEntry(
                    subject_id=row["subject_id"],
                    session_id=row["session_id"],
                    sensor_location=SensorLocation(row["sensor_location"]),
                    data_path=base / row["data_path"],
                    annotation_path=base / row["annotation_path"],
                ))
        tax = taxonomy_path or (base / "taxonomy.csv" if (base / "taxonomy.csv").exists() else None)
        return cls(entries, taxonomy_path=tax)


@dataclass(frozen=True)
class QualityReport:
    session_id: str
    eda_std: float
    flatline_fraction: float
    max_dropout_s: float
    verdict: Verdict


def load_recording(entry: ManifestEntry) -> Recording:
    """Parse a recording CSV; interpolate gaps and log them.

    Rows with empty fields and time jumps both become gap entries; every gap
    is filled by linear interpolation so channels stay NaN-free, and gaps of
    1 s or more are additionally counted toward dropout screening.
    """
    path = Path(entry.data_path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    times, rows, missing_rows = [], [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file")
        if header != RECORDING_HEADER:
            raise MalformedRow(1, f"header must be {','.join(RECORDING_HEADER)}, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise MalformedRow(line_no, f"expected 6 fields, got {len(row)}")
            if row[0] == "":
                raise MalformedRow(line_no, "missing timestamp")
            try:
                t = float(row[0])
            except ValueError:
                raise MalformedRow(line_no, f"bad timestamp {row[0]!r}")
            vals = []
            has_missing = False
            for cell in row[1:]:
                if cell == "":
                    has_missing = True
                    vals.append(np.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise MalformedRow(line_no, f"bad value {cell!r}")
            times.append(t)
            rows.append(vals)
            if has_missing:
                missing_rows.append(len(times) - 1)
    if not times:
        raise MalformedRow(2, "no data rows")
    t = np.asarray(times)
    if np.any(np.diff(t) <= 0):
        raise MalformedRow(int(np.argmax(np.diff(t) <= 0)) + 3, "t_s must be strictly increasing")
    dt = 1.0 / SAMPLE_RATE_HZ
    if len(t) > 1:
        med = float(np.median(np.diff(t)))
        if abs(med - dt) > 0.1 * dt:
            raise SampleRateMismatch(f"median step {med:.5f} s is not 1/{SAMPLE_RATE_HZ} s")

    vals = np.asarray(rows, dtype=np.float64)
    for i in missing_rows:
        vals[i, :] = np.nan

    # uniform grid from first to last timestamp
    n = int(round((t[-1] - t[0]) / dt)) + 1
    grid = t[0] + dt * np.arange(n)
    idx = np.rint((t - t[0]) / dt).astype(np.int64)
    full = np.full((n, 5), np.nan)
    full[idx] = vals

    gaps: list[Gap] = []
    present = ~np.isnan(full).any(axis=1)
    filled = np.empty_like(full)
    for c in range(5):
        col = full[:, c]
        ok = ~np.isnan(col)
        filled[:, c] = np.interp(grid, grid[ok], col[ok])
    run_start = None
    for i in range(n):
        if not present[i] and run_start is None:
            run_start = i
        elif present[i] and run_start is not None:
            gaps.append(Gap(start_s=float(grid[run_start] - grid[0]), duration_s=float((i - run_start) * dt)))
            run_start = None
    if run_start is not None:
        gaps.append(Gap(start_s=float(grid[run_start] - grid[0]), duration_s=float((n - run_start) * dt)))

    return Recording(
        subject_id=entry.subject_id,
        session_id=entry.session_id,
        sensor_location=entry.sensor_location,
        sample_rate_hz=SAMPLE_RATE_HZ,
        accel=filled[:, 0:3],
        eda=filled[:, 3],
        temp=filled[:, 4],
        start_epoch_s=float(t[0]),
        gaps=gaps,
    )


def write_recording(path, rec: Recording):
    """Emit the recording CSV contract; float fields use shortest repr so the
    load/write round trip is bit-exact."""
    dt = 1.0 / rec.sample_rate_hz
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(RECORDING_HEADER) + "\n")
        for i in range(rec.n_samples):
            t = rec.start_epoch_s + i * dt
            cells = (t, rec.accel[i, 0], rec.accel[i, 1], rec.accel[i, 2], rec.eda[i], rec.temp[i])
            f.write(",".join(repr(float(v)) for v in cells) + "\n")


def load_annotations(path) -> list[AnnotationEvent]:
    events = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["behavior", "start_s", "end_s"]:
            raise MalformedRow(1, "annotation header must be behavior,start_s,end_s")
        for i, row in enumerate(reader, start=2):
            try:
                events.append(AnnotationEvent(row["behavior"], float(row["start_s"]), float(row["end_s"])))
            except ValueError as e:
                raise MalformedRow(i, str(e))
    return events


def write_annotations(path, events: list[AnnotationEvent]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["behavior", "start_s", "end_s"])
        for e in events:
            w.writerow([e.behavior_raw, repr(float(e.start_s)), repr(float(e.end_s))])


DEFAULT_FLATLINE_STD_US = 0.01
DEFAULT_MAX_DROPOUT_S = 5.0


def screen_session(rec: Recording, flatline_std_uS: float = DEFAULT_FLATLINE_STD_US,
                   max_dropout_s: float = DEFAULT_MAX_DROPOUT_S) -> QualityReport:
    """EDA-only session gate: flatline (low whole-session std) or dropout
    (any ingestion gap longer than the limit). Pure function of the EDA
    signal, the gap list, and the thresholds."""
    eda_std = float(np.std(rec.eda))
    max_gap = max((g.duration_s for g in rec.gaps), default=0.0)
    # fraction of non-overlapping 5 s blocks that look flat
    block = 5 * rec.sample_rate_hz
    nb = rec.n_samples // block
    if nb > 0:
        blocks = rec.eda[:nb * block].reshape(nb, block)
        flat_frac = float(np.mean(blocks.std(axis=1) < flatline_std_uS))
    else:
        flat_frac = 0.0
    if eda_std < flatline_std_uS:
        verdict = Verdict.REJECT_FLATLINE
    elif max_gap > max_dropout_s:
        verdict = Verdict.REJECT_DROPOUT
    else:
        verdict = Verdict.ACCEPT
    return QualityReport(
        session_id=rec.session_id,
        eda_std=eda_std,
        flatline_fraction=flat_frac,
        max_dropout_s=max_gap,
        verdict=verdict,
    )
