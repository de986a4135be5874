"""Ingestion, taxonomy mapping, and session screening."""

from pathlib import Path

import numpy as np
import pytest

from cbwear.data import (
    AnnotationEvent,
    BehaviorTaxonomy,
    DatasetManifest,
    ManifestEntry,
    Recording,
    SensorLocation,
    TopBin,
    Verdict,
    load_annotations,
    load_recording,
    map_behavior,
    screen_session,
    write_annotations,
    write_recording,
)
from cbwear.errors import MalformedRow, SampleRateMismatch, UnknownBehavior

DT = 1.0 / 30.0


def entry_for(path, subject="S01", session="s1"):
    return ManifestEntry(subject, session, SensorLocation.LEFT_ANKLE, Path(path), Path("/dev/null"))


def write_rows(path, rows, header="t_s,acc_x,acc_y,acc_z,eda_uS,temp_C"):
    with open(path, "w") as f:
        f.write(header + "\n")
        for r in rows:
            f.write(",".join(str(v) for v in r) + "\n")


def test_load_small_valid_file(tmp_path):
    p = tmp_path / "rec.csv"
    rows = [(i * DT, 0.1, 0.2, 0.3, 2.0 + i * 0.01, 33.0) for i in range(5)]
    write_rows(p, rows)
    rec = load_recording(entry_for(p))
    assert rec.n_samples == 5
    assert rec.gaps == []
    np.testing.assert_allclose(rec.eda, [2.0, 2.01, 2.02, 2.03, 2.04])


def test_gap_is_interpolated_and_logged(tmp_path):
    # 0.5 s hole: rows jump from t=1.0 s to t=1.5 s
    p = tmp_path / "rec.csv"
    rows = []
    for i in range(31):
        rows.append((i * DT, 0.0, 0.0, 0.0, float(i), 33.0))
    for i in range(45, 60):
        rows.append((i * DT, 0.0, 0.0, 0.0, float(i), 33.0))
    write_rows(p, rows)
    rec = load_recording(entry_for(p))
    assert rec.n_samples == 60
    assert len(rec.gaps) == 1
    assert rec.gaps[0].duration_s == pytest.approx(14 * DT)
    # hand-interpolated oracle across the hole
    expected = np.interp(np.arange(31, 45), [30, 45], [30.0, 45.0])
    np.testing.assert_allclose(rec.eda[31:45], expected, atol=1e-12)


def test_missing_header_column_is_malformed(tmp_path):
    p = tmp_path / "rec.csv"
    write_rows(p, [(0.0, 0, 0, 0, 33.0)], header="t_s,acc_x,acc_y,acc_z,temp_C")
    with pytest.raises(MalformedRow):
        load_recording(entry_for(p))


def test_malformed_row_reports_line_number(tmp_path):
    p = tmp_path / "rec.csv"
    write_rows(p, [(0.0, 0, 0, 0, 2.0, 33.0), (DT, 0, 0, "oops", 2.0, 33.0)])
    with pytest.raises(MalformedRow) as ei:
        load_recording(entry_for(p))
    assert ei.value.line_no == 3


def test_wrong_sample_rate_rejected(tmp_path):
    p = tmp_path / "rec.csv"
    write_rows(p, [(i / 15.0, 0, 0, 0, 2.0, 33.0) for i in range(10)])
    with pytest.raises(SampleRateMismatch):
        load_recording(entry_for(p))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_recording(entry_for("/nonexistent/file.csv"))


def test_recording_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    rec = Recording("S01", "s1", SensorLocation.LEFT_WRIST, 30,
                    accel=rng.standard_normal((200, 3)),
                    eda=2.0 + rng.random(200),
                    temp=33.0 + rng.standard_normal(200) * 0.1,
                    start_epoch_s=12.5)
    p = tmp_path / "rt.csv"
    write_recording(p, rec)
    back = load_recording(entry_for(p))
    np.testing.assert_array_equal(back.accel, rec.accel)
    np.testing.assert_array_equal(back.eda, rec.eda)
    np.testing.assert_array_equal(back.temp, rec.temp)
    assert back.start_epoch_s == rec.start_epoch_s
    assert back.gaps == []


def test_annotation_roundtrip(tmp_path):
    events = [AnnotationEvent("hand bite", 1.25, 3.5), AnnotationEvent("jumping", 10.0, 12.0)]
    p = tmp_path / "ann.csv"
    write_annotations(p, events)
    assert load_annotations(p) == events


EIGHT_BEHAVIORS = {
    "motor stereotypies": TopBin.STEREOTYPY,
    "aggression": TopBin.AGGRESSION,
    "self-injurious behavior": TopBin.SIB,
    "self-injurious jump": TopBin.SIB,
    "hand bite": TopBin.SIB,
    "dropping": TopBin.STEREOTYPY,
    "jumping": TopBin.STEREOTYPY,
    "disruptive behavior": TopBin.AGGRESSION,
}


def test_map_behavior_covers_all_eight():
    tax = BehaviorTaxonomy.default()
    for raw, top in EIGHT_BEHAVIORS.items():
        assert map_behavior(raw, tax) is top


def test_map_behavior_examples():
    tax = BehaviorTaxonomy.default()
    assert map_behavior("hand bite", tax) is TopBin.SIB
    assert map_behavior("jumping", tax) is TopBin.STEREOTYPY
    with pytest.raises(UnknownBehavior):
        map_behavior("spinning", tax)


def test_taxonomy_csv_roundtrip(tmp_path):
    tax = BehaviorTaxonomy.default()
    p = tmp_path / "taxonomy.csv"
    tax.to_csv(p)
    back = BehaviorTaxonomy.from_csv(p)
    assert back.raw_to_secondary == tax.raw_to_secondary
    assert back.secondary_to_top == tax.secondary_to_top


def make_rec(eda, gaps=None, accel=None, temp=None):
    n = len(eda)
    from cbwear.data import Gap
    return Recording(
        "S01", "s1", SensorLocation.LEFT_ANKLE, 30,
        accel=accel if accel is not None else np.zeros((n, 3)),
        eda=np.asarray(eda, dtype=float),
        temp=temp if temp is not None else np.full(n, 33.0),
        gaps=[Gap(*g) for g in (gaps or [])],
    )


def test_screen_constant_eda_rejected_as_flatline():
    rep = screen_session(make_rec(np.full(900, 2.0)))
    assert rep.verdict is Verdict.REJECT_FLATLINE
    assert rep.eda_std == 0.0


def test_screen_sinusoidal_eda_accepted():
    t = np.arange(900) / 30.0
    rep = screen_session(make_rec(2.0 + 0.5 * np.sin(2 * np.pi * t / 20)))
    assert rep.verdict is Verdict.ACCEPT


def test_screen_long_gap_rejected_as_dropout():
    t = np.arange(900) / 30.0
    eda = 2.0 + 0.5 * np.sin(2 * np.pi * t / 20)
    rep = screen_session(make_rec(eda, gaps=[(5.0, 10.0)]), max_dropout_s=5.0)
    assert rep.verdict is Verdict.REJECT_DROPOUT
    assert rep.max_dropout_s == 10.0


def test_screen_ignores_accel_and_temp_content():
    rng = np.random.default_rng(7)
    t = np.arange(900) / 30.0
    eda = 2.0 + 0.5 * np.sin(2 * np.pi * t / 20)
    base = screen_session(make_rec(eda))
    for seed in range(5):
        r = np.random.default_rng(seed)
        noisy = screen_session(make_rec(
            eda,
            accel=r.standard_normal((900, 3)) * 5,
            temp=20 + r.standard_normal(900) * 10,
        ))
        assert noisy.verdict is base.verdict
        assert noisy.eda_std == base.eda_std


def test_manifest_rejects_duplicate_sessions(tmp_path):
    e = entry_for(tmp_path / "a.csv")
    with pytest.raises(ValueError):
        DatasetManifest([e, e])
