"""Capture-session bundles: parsing, writing and structural validation.

Bundle layout::

    <session_id>/
      meta.json
      instruction.txt
      poses_left.jsonl, poses_right.jsonl     {"t","p","q","aperture","conf"}
      frames/<camera_id>/index.jsonl          {"t","path","w","h"}
      frames/<camera_id>/*.pgm|*.png
      annotations.json                        optional sidecar
"""
from __future__ import annotations

import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import (
    ApertureOutOfRange,
    IngestError,
    MissingFile,
    NonMonotonicTimestamp,
    SchemaViolation,
)
from .transforms import Pose6D

META_FIELDS = ("session_id", "operator_id", "gripper_kind", "nominal_pose_hz",
               "nominal_video_hz", "baseline_distance_m", "camera_count", "collected_at")
DEFAULT_ARMS = ("left", "right")
CONFIDENCE_DIP = 0.5
GAP_FACTOR = 3.0


@dataclass(frozen=True)
class DeviceMeta:
    gripper_kind: str
    nominal_pose_hz: float
    nominal_video_hz: float
    baseline_distance: float
    camera_count: int
    arms: tuple[str, ...] = DEFAULT_ARMS
    ego_camera: str = "ego"
    calibration_ticks: int = 30
    extra_modalities: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.baseline_distance > 0:
            raise ValueError("baseline_distance must be positive")
        if not (self.nominal_pose_hz > 0 and self.nominal_video_hz > 0):
            raise ValueError("nominal rates must be positive")


@dataclass(frozen=True)
class PoseSample:
    t: float
    pose: Pose6D
    gripper_aperture: float
    tracking_confidence: float = 1.0
    aperture_raw: float | None = None


@dataclass(frozen=True)
class FrameRef:
    t: float
    camera_id: str
    image_path: str  # relative to frames/<camera_id>/
    width: int
    height: int


@dataclass(frozen=True)
class RawSession:
    session_id: str
    operator_id: str
    device_meta: DeviceMeta
    instruction: str
    pose_streams: dict[str, tuple[PoseSample, ...]]
    frame_streams: dict[str, tuple[FrameRef, ...]]
    collected_at: str
    source: str = "robot_free"
    root: Path | None = field(default=None, compare=False)

    def frame_file(self, frame: FrameRef) -> Path:
        return Path(self.root) / "frames" / frame.camera_id / frame.image_path


def _read_json(root: Path, name: str) -> dict:
    path = root / name
    if not path.is_file():
        raise MissingFile(name)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(name, exc.lineno, "<json>", exc.msg) from None


def _iter_jsonl(root: Path, name: str):
    path = root / name
    if not path.is_file():
        raise MissingFile(name)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(name, lineno, "<json>", exc.msg) from None
            if not isinstance(rec, dict):
                raise SchemaViolation(name, lineno, "<record>", "not an object")
            yield lineno, rec


def _number(rec: dict, key: str, name: str, lineno: int, default=None) -> float:
    v = rec.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaViolation(name, lineno, key)
    return float(v)


def _vector(rec: dict, key: str, n: int, name: str, lineno: int) -> tuple[float, ...]:
    v = rec.get(key)
    if not isinstance(v, list) or len(v) != n:
        raise SchemaViolation(name, lineno, key, f"expected {n} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise SchemaViolation(name, lineno, key)
        out.append(float(x))
    return tuple(out)


def _check_increasing(stream: str, t: float, prev: float | None, lineno: int) -> None:
    if prev is not None and not t > prev:
        raise NonMonotonicTimestamp(stream, lineno)


def parse_pose_stream(root: Path, arm: str) -> tuple[PoseSample, ...]:
    name = f"poses_{arm}.jsonl"
    out = []
    prev = None
    for lineno, rec in _iter_jsonl(root, name):
        t = _number(rec, "t", name, lineno)
        _check_increasing(arm, t, prev, lineno)
        prev = t
        p = _vector(rec, "p", 3, name, lineno)
        q = _vector(rec, "q", 4, name, lineno)
        if abs(math.sqrt(sum(x * x for x in q)) - 1.0) > 1e-3:
            raise SchemaViolation(name, lineno, "q", "not a unit quaternion")
        aperture = _number(rec, "aperture", name, lineno)
        if not 0.0 <= aperture <= 1.0:
            raise ApertureOutOfRange(arm, lineno, aperture)
        conf = _number(rec, "conf", name, lineno, default=1.0)
        if not 0.0 <= conf <= 1.0:
            raise SchemaViolation(name, lineno, "conf", "outside [0, 1]")
        raw = rec.get("aperture_raw")
        if raw is not None:
            raw = _number(rec, "aperture_raw", name, lineno)
        out.append(PoseSample(t, Pose6D(p, q), aperture, conf, raw))
    return tuple(out)


def parse_frame_stream(root: Path, camera: str) -> tuple[FrameRef, ...]:
    name = f"frames/{camera}/index.jsonl"
    out = []
    prev = None
    for lineno, rec in _iter_jsonl(root, name):
        t = _number(rec, "t", name, lineno)
        _check_increasing(camera, t, prev, lineno)
        prev = t
        path = rec.get("path")
        if not isinstance(path, str) or not path:
            raise SchemaViolation(name, lineno, "path")
        w, h = rec.get("w"), rec.get("h")
        for key, v in (("w", w), ("h", h)):
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise SchemaViolation(name, lineno, key)
        out.append(FrameRef(t, camera, path, w, h))
    return tuple(out)


def _parse_meta(raw: dict) -> DeviceMeta:
    for key in META_FIELDS:
        if key not in raw:
            raise SchemaViolation("meta.json", 1, key, "missing")
    try:
        return DeviceMeta(
            gripper_kind=str(raw["gripper_kind"]),
            nominal_pose_hz=float(raw["nominal_pose_hz"]),
            nominal_video_hz=float(raw["nominal_video_hz"]),
            baseline_distance=float(raw["baseline_distance_m"]),
            camera_count=int(raw["camera_count"]),
            arms=tuple(raw.get("arms", DEFAULT_ARMS)),
            ego_camera=str(raw.get("ego_camera", "ego")),
            calibration_ticks=int(raw.get("calibration_ticks", 30)),
            extra_modalities=tuple(raw.get("extra_modalities", ())),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation("meta.json", 1, "<meta>", str(exc)) from None


def parse_session(bundle_root) -> RawSession:
    """Read and structurally validate a capture bundle."""
    root = Path(bundle_root)
    raw_meta = _read_json(root, "meta.json")
    meta = _parse_meta(raw_meta)
    instr_path = root / "instruction.txt"
    if not instr_path.is_file():
        raise MissingFile("instruction.txt")
    instruction = instr_path.read_text(encoding="utf-8").strip()

    poses = {arm: parse_pose_stream(root, arm) for arm in meta.arms}

    frames_dir = root / "frames"
    if not frames_dir.is_dir():
        raise MissingFile("frames")
    cameras = sorted(p.name for p in frames_dir.iterdir() if p.is_dir())
    if meta.ego_camera not in cameras:
        raise MissingFile(f"frames/{meta.ego_camera}/index.jsonl")
    if len(cameras) > meta.camera_count:
        raise IngestError(f"{len(cameras)} camera streams but camera_count is {meta.camera_count}")
    frames = {cam: parse_frame_stream(root, cam) for cam in cameras}

    return RawSession(
        session_id=str(raw_meta["session_id"]),
        operator_id=str(raw_meta["operator_id"]),
        device_meta=meta,
        instruction=instruction,
        pose_streams=poses,
        frame_streams=frames,
        collected_at=str(raw_meta["collected_at"]),
        source=str(raw_meta.get("source", "robot_free")),
        root=root,
    )


def _pose_record(s: PoseSample) -> dict:
    rec = {"t": s.t, "p": list(s.pose.translation), "q": list(s.pose.rotation),
           "aperture": s.gripper_aperture, "conf": s.tracking_confidence}
    if s.aperture_raw is not None:
        rec["aperture_raw"] = s.aperture_raw
    return rec


def write_jsonl(path: Path, records) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_session(session: RawSession, bundle_root) -> Path:
    """Write ``session`` as a bundle. Image files are not copied."""
    root = Path(bundle_root)
    root.mkdir(parents=True, exist_ok=True)
    m = session.device_meta
    meta = {
        "session_id": session.session_id,
        "operator_id": session.operator_id,
        "gripper_kind": m.gripper_kind,
        "nominal_pose_hz": m.nominal_pose_hz,
        "nominal_video_hz": m.nominal_video_hz,
        "baseline_distance_m": m.baseline_distance,
        "camera_count": m.camera_count,
        "collected_at": session.collected_at,
        "arms": list(m.arms),
        "ego_camera": m.ego_camera,
        "calibration_ticks": m.calibration_ticks,
        "extra_modalities": list(m.extra_modalities),
        "source": session.source,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    (root / "instruction.txt").write_text(session.instruction + "\n", encoding="utf-8")
    for arm, stream in session.pose_streams.items():
        write_jsonl(root / f"poses_{arm}.jsonl", (_pose_record(s) for s in stream))
    for cam, stream in session.frame_streams.items():
        d = root / "frames" / cam
        d.mkdir(parents=True, exist_ok=True)
        write_jsonl(d / "index.jsonl",
                    ({"t": f.t, "path": f.image_path, "w": f.width, "h": f.height} for f in stream))
    return root


# --- informational report


@dataclass
class Gap:
    stream: str
    start: float
    end: float


@dataclass
class IngestReport:
    session_id: str
    pose_counts: dict[str, int]
    frame_counts: dict[str, int]
    pose_rate_hz: dict[str, float]
    video_rate_hz: dict[str, float]
    gaps: list[Gap]
    confidence_dips: list[Gap]
    warnings: list[str]

    def to_json(self) -> dict:
        return asdict(self)


def _median_rate(ts: list[float]) -> float:
    if len(ts) < 2:
        return 0.0
    return statistics.median(1.0 / (b - a) for a, b in zip(ts, ts[1:]))


def _gaps(stream: str, ts: list[float], nominal_hz: float) -> list[Gap]:
    limit = GAP_FACTOR / nominal_hz
    return [Gap(stream, a, b) for a, b in zip(ts, ts[1:]) if b - a > limit]


def _dips(arm: str, samples) -> list[Gap]:
    out = []
    start = None
    prev_t = None
    for s in samples:
        low = s.tracking_confidence < CONFIDENCE_DIP
        if low and start is None:
            start = s.t
        elif not low and start is not None:
            out.append(Gap(arm, start, prev_t))
            start = None
        prev_t = s.t
    if start is not None:
        out.append(Gap(arm, start, prev_t))
    return out


def validate_session(session: RawSession) -> IngestReport:
    """Rates, dropout gaps and confidence dips. Never rejects a session."""
    m = session.device_meta
    warnings = []
    gaps = []
    dips = []
    pose_rates = {}
    for arm, stream in session.pose_streams.items():
        ts = [s.t for s in stream]
        pose_rates[arm] = _median_rate(ts)
        gaps += _gaps(arm, ts, m.nominal_pose_hz)
        dips += _dips(arm, stream)
        if len(ts) < 2:
            warnings.append(f"pose stream {arm!r} has {len(ts)} samples")
    video_rates = {}
    for cam in sorted(session.frame_streams):
        stream = session.frame_streams[cam]
        ts = [f.t for f in stream]
        video_rates[cam] = _median_rate(ts)
        if not stream:
            warnings.append(f"camera {cam!r} has an empty frame stream")
            continue
        gaps += _gaps(cam, ts, m.nominal_video_hz)
        if session.root is not None:
            missing = [f.image_path for f in stream if not session.frame_file(f).is_file()]
            if missing:
                warnings.append(f"camera {cam!r}: {len(missing)} frame files missing (first: {missing[0]})")
    if m.extra_modalities:
        warnings.append(f"extra modalities present but not processed: {list(m.extra_modalities)}")
    return IngestReport(
        session_id=session.session_id,
        pose_counts={a: len(s) for a, s in session.pose_streams.items()},
        frame_counts={c: len(s) for c, s in sorted(session.frame_streams.items())},
        pose_rate_hz=pose_rates,
        video_rate_hz=video_rates,
        gaps=sorted(gaps, key=lambda g: (g.stream, g.start)),
        confidence_dips=dips,
        warnings=warnings,
    )
