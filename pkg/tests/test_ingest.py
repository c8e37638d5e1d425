import json
import shutil

import numpy as np
import pytest

from builders import frame_stream, meta, pose_stream, session
from g0forge.errors import (
    ApertureOutOfRange,
    IngestError,
    MissingFile,
    NonMonotonicTimestamp,
    SchemaViolation,
)
from g0forge.ingest import parse_session, validate_session, write_session


def minimal(tmp_path, n=2):
    left = pose_stream([0.0, 0.5][:n], [[0, 0.2, 0], [0, 0.2, 0.1]][:n])
    right = pose_stream([0.0, 0.5][:n], [[0, -0.2, 0], [0, -0.2, 0.1]][:n])
    s = session(left, right, {"ego": frame_stream([0.0])})
    return write_session(s, tmp_path / "s1"), s


def test_minimal_bundle_roundtrip(tmp_path):
    root, s = minimal(tmp_path)
    parsed = parse_session(root)
    assert len(parsed.pose_streams["left"]) == 2
    assert len(parsed.frame_streams["ego"]) == 1
    assert parsed == s


def test_roundtrip_random_session(tmp_path, rng):
    t = np.cumsum(rng.uniform(0.005, 0.02, size=50))
    q = rng.normal(size=(50, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    left = pose_stream(t, rng.normal(size=(50, 3)), q, rng.uniform(0, 1, 50), rng.uniform(0, 1, 50))
    right = pose_stream(t, rng.normal(size=(50, 3)), q[::-1], rng.uniform(0, 1, 50))
    s = session(left, right, {"ego": frame_stream(t[::4]), "left_wrist": frame_stream(t[::4], "left_wrist")})
    root = write_session(s, tmp_path / "s1")
    first = parse_session(root)
    assert first == s
    root2 = write_session(first, tmp_path / "s2")
    assert parse_session(root2) == first


def test_parsing_does_not_touch_files(tmp_path):
    root, _ = minimal(tmp_path)
    before = {p: p.read_bytes() for p in root.rglob("*") if p.is_file()}
    parse_session(root)
    assert before == {p: p.read_bytes() for p in root.rglob("*") if p.is_file()}


def test_decreasing_time_reports_stream_and_line(tmp_path):
    times = [0.0, 0.1, 0.2, 0.3, 0.25, 0.5]
    left = pose_stream(times)
    right = pose_stream(sorted(times))
    s = session(left, right, {"ego": frame_stream([0.0])})
    root = tmp_path / "s"
    # write_session writes whatever it is given; the parser must catch the order
    write_session(s, root)
    with pytest.raises(NonMonotonicTimestamp) as err:
        parse_session(root)
    assert (err.value.stream, err.value.index) == ("left", 5)


def test_missing_instruction(tmp_path):
    root, _ = minimal(tmp_path)
    (root / "instruction.txt").unlink()
    with pytest.raises(MissingFile) as err:
        parse_session(root)
    assert err.value.name == "instruction.txt"


def test_missing_pose_stream(tmp_path):
    root, _ = minimal(tmp_path)
    (root / "poses_right.jsonl").unlink()
    with pytest.raises(MissingFile, match="poses_right.jsonl"):
        parse_session(root)


def test_missing_ego_camera(tmp_path):
    root, _ = minimal(tmp_path)
    shutil.rmtree(root / "frames" / "ego")
    (root / "frames" / "wrist").mkdir()
    (root / "frames" / "wrist" / "index.jsonl").write_text("")
    with pytest.raises(MissingFile):
        parse_session(root)


def test_too_many_cameras(tmp_path):
    root, _ = minimal(tmp_path)
    for cam in ("a", "b", "c"):
        (root / "frames" / cam).mkdir()
        (root / "frames" / cam / "index.jsonl").write_text("")
    with pytest.raises(IngestError):
        parse_session(root)


@pytest.mark.parametrize("line, field", [
    ('{"t": 0.5, "p": [0, 0], "q": [1, 0, 0, 0], "aperture": 1}', "p"),
    ('{"t": 0.5, "p": [0, 0, 0], "q": [2, 0, 0, 0], "aperture": 1}', "q"),
    ('{"t": "x", "p": [0, 0, 0], "q": [1, 0, 0, 0], "aperture": 1}', "t"),
    ('{"t": 0.5, "p": [0, 0, 0], "q": [1, 0, 0, 0]}', "aperture"),
    ('{"t": 0.5, "p": [0, 0, 0], "q": [1, 0, 0, 0], "aperture": 1, "conf": 3}', "conf"),
    ('{"t": 0.5, "p": [0, 0, 0], "q": [1, 0, 0, 0], "aperture": 1, "conf": NaN}', "conf"),
    ("not json", "<json>"),
])
def test_schema_violations_name_file_line_field(tmp_path, line, field):
    root, _ = minimal(tmp_path)
    path = root / "poses_left.jsonl"
    lines = path.read_text().splitlines()
    lines[1] = line
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaViolation) as err:
        parse_session(root)
    assert (err.value.file, err.value.line, err.value.field) == ("poses_left.jsonl", 2, field)


def test_aperture_out_of_range(tmp_path):
    root, _ = minimal(tmp_path)
    path = root / "poses_right.jsonl"
    rec = json.loads(path.read_text().splitlines()[0])
    rec["aperture"] = 1.2
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ApertureOutOfRange) as err:
        parse_session(root)
    assert err.value.value == 1.2


def test_confidence_defaults_to_one(tmp_path):
    root, _ = minimal(tmp_path)
    path = root / "poses_left.jsonl"
    recs = [json.loads(x) for x in path.read_text().splitlines()]
    for r in recs:
        del r["conf"]
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    s = parse_session(root)
    assert all(p.tracking_confidence == 1.0 for p in s.pose_streams["left"])


def test_meta_missing_field(tmp_path):
    root, _ = minimal(tmp_path)
    m = json.loads((root / "meta.json").read_text())
    del m["baseline_distance_m"]
    (root / "meta.json").write_text(json.dumps(m))
    with pytest.raises(SchemaViolation, match="baseline_distance_m"):
        parse_session(root)


def test_measured_pose_rate():
    t = np.arange(600) / 120.0
    s = session(pose_stream(t), pose_stream(t), {"ego": frame_stream(np.arange(150) / 30.0)})
    report = validate_session(s)
    assert report.pose_rate_hz["left"] == pytest.approx(120.0, abs=0.5)
    assert report.video_rate_hz["ego"] == pytest.approx(30.0, abs=0.5)
    assert report.gaps == []


def test_one_hole_gives_one_gap():
    t = np.arange(300) / 30.0
    video = np.concatenate([t[t < 4.0], t[t >= 4.5]])
    s = session(pose_stream(np.arange(1200) / 120.0), pose_stream(np.arange(1200) / 120.0),
                {"ego": frame_stream(video)}, meta(video_hz=30.0))
    report = validate_session(s)
    assert len(report.gaps) == 1
    g = report.gaps[0]
    assert g.stream == "ego"
    assert g.start <= 4.0 and g.end >= 4.5 - 1e-9
    assert g.end - g.start > 3 / 30.0


def test_gaps_are_sorted_and_disjoint(rng):
    t = np.cumsum(np.where(rng.uniform(size=2000) < 0.01, 0.2, 1 / 120))
    s = session(pose_stream(t), pose_stream(t[::-1][::-1]), {"ego": frame_stream(t[::4])})
    report = validate_session(s)
    for stream in ("left", "right", "ego"):
        gs = [g for g in report.gaps if g.stream == stream]
        assert all(g.end - g.start > 3 / (120.0 if stream != "ego" else 30.0) for g in gs)
        assert all(a.end <= b.start for a, b in zip(gs, gs[1:]))


def test_empty_frame_stream_warns():
    t = np.arange(10) / 120.0
    s = session(pose_stream(t), pose_stream(t), {"ego": frame_stream(t), "left_wrist": ()})
    report = validate_session(s)
    assert any("left_wrist" in w for w in report.warnings)


def test_confidence_dips():
    t = np.arange(100) / 100.0
    conf = np.ones(100)
    conf[20:30] = 0.2
    s = session(pose_stream(t, conf=conf), pose_stream(t), {"ego": frame_stream(t)})
    dips = validate_session(s).confidence_dips
    assert len(dips) == 1
    assert (dips[0].start, dips[0].end) == (t[20], t[29])
