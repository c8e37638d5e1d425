"""Per-session orchestration and the on-disk episode store.

Store layout, one directory per episode::

    <store>/<episode_id>/episode.json      episode fields, calibration, bundle path
    <store>/<episode_id>/trajectory.jsonl  one retargeted waypoint per line
    <store>/<episode_id>/report.json       validation report
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .episodes import Chunk, Episode, build_chunks, load_annotations
from .errors import G0Error
from .ingest import parse_session
from .kinematics import RobotModel
from .quality import (
    QualityProfile,
    check_motion_limits,
    downsample_stationary,
    filter_blurred,
    stationary_spans,
)
from .retarget import (
    QualityOutputs,
    RetargetedTrajectory,
    RobotProfile,
    ValidationReport,
    calibrate_frames,
    retarget,
    validate_trajectory,
)
from .sync import align_streams
from .transforms import Pose6D

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    robot_profile: Path | None = None
    quality_profile: Path | None = None
    inputs: list[Path] = field(default_factory=list)
    store: Path | None = None
    tick_hz: float = 30.0
    workers: int = 1
    log_level: str = "INFO"

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        def path(v):
            if v is None:
                return None
            p = Path(v)
            return p if p.is_absolute() or base_dir is None else base_dir / p

        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            robot_profile=path(d.get("robot_profile")),
            quality_profile=path(d.get("quality_profile")),
            inputs=[path(p) for p in d.get("inputs", [])],
            store=path(d.get("store")),
            tick_hz=float(d.get("tick_hz", 30.0)),
            workers=int(d.get("workers", 1)),
            log_level=str(d.get("log_level", "INFO")),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def check(self, need_robot: bool = True) -> None:
        if self.tick_hz <= 0:
            raise ValueError("tick_hz must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if need_robot and (self.robot_profile is None or not Path(self.robot_profile).is_file()):
            raise FileNotFoundError(f"robot profile not found: {self.robot_profile}")
        if self.quality_profile is not None and not Path(self.quality_profile).is_file():
            raise FileNotFoundError(f"quality profile not found: {self.quality_profile}")


# --- store I/O


def write_text(path: Path, text: str) -> None:
    """Replace ``path`` atomically so an interrupted run never leaves a torn file."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def waypoint_record(traj: RetargetedTrajectory, k: int) -> dict:
    return {
        "t": float(traj.times[k]),
        "index": int(traj.tick_indices[k]),
        "tcp": {a: traj.targets[a][k].to_json() for a in traj.arms},
        "width": {a: float(traj.widths[a][k]) for a in traj.arms},
        "q": {a: [float(v) for v in traj.joints[a][k]] for a in traj.arms},
        "converged": {a: bool(traj.converged[a][k]) for a in traj.arms},
        "iterations": {a: int(traj.iterations[a][k]) for a in traj.arms},
        "frames": traj.frames[k] if k < len(traj.frames) else {},
    }


def write_episode(store, episode: Episode, traj: RetargetedTrajectory, report: ValidationReport) -> Path:
    d = Path(store) / episode.episode_id
    d.mkdir(parents=True, exist_ok=True)
    write_text(d / "episode.json", dump_json(episode.to_json()))
    lines = [json.dumps(waypoint_record(traj, k), sort_keys=True, separators=(",", ":")) for k in range(len(traj))]
    write_text(d / "trajectory.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    write_text(d / "report.json", dump_json(report.to_json()))
    return d


def load_episode(episode_dir) -> Episode:
    return Episode.from_json(json.loads((Path(episode_dir) / "episode.json").read_text(encoding="utf-8")))


def load_report(episode_dir) -> ValidationReport:
    return ValidationReport.from_json(json.loads((Path(episode_dir) / "report.json").read_text(encoding="utf-8")))


def load_trajectory(episode_dir) -> RetargetedTrajectory:
    episode_dir = Path(episode_dir)
    meta = json.loads((episode_dir / "episode.json").read_text(encoding="utf-8"))
    with (episode_dir / "trajectory.jsonl").open(encoding="utf-8") as fh:
        recs = [json.loads(line) for line in fh if line.strip()]
    arms = tuple(meta["arms"])
    return RetargetedTrajectory(
        session_id=meta["session_id"],
        robot_name=meta["robot_name"],
        arms=arms,
        times=np.array([r["t"] for r in recs]),
        tick_indices=tuple(r["index"] for r in recs),
        targets={a: [Pose6D.from_json(r["tcp"][a]) for r in recs] for a in arms},
        widths={a: np.array([r["width"][a] for r in recs]) for a in arms},
        joints={a: np.array([r["q"][a] for r in recs]) for a in arms},
        converged={a: np.array([r["converged"][a] for r in recs], dtype=bool) for a in arms},
        iterations={a: np.array([r["iterations"][a] for r in recs], dtype=int) for a in arms},
        gripper_range=tuple(meta["gripper_range"]),
        frames=[r["frames"] for r in recs],
    )


def list_episodes(store) -> list[Episode]:
    store = Path(store)
    return [load_episode(d) for d in sorted(store.iterdir()) if (d / "episode.json").is_file()]


def shard_record(episode_dir: Path, entry) -> dict:
    """One training record: instruction, per-tick frames, TCP poses, widths, joints, chunks."""
    ep = load_episode(episode_dir)
    traj = load_trajectory(episode_dir)
    report = load_report(episode_dir)
    bundle = ep.extra.get("bundle", "")
    ticks = []
    for k in range(len(traj)):
        ticks.append({
            "t": float(traj.times[k]),
            "index": int(traj.tick_indices[k]),
            "frames": {c: (None if p is None else f"frames/{c}/{p}") for c, p in sorted(traj.frames[k].items())},
            "tcp": {a: traj.targets[a][k].to_json() for a in traj.arms},
            "width": {a: float(traj.widths[a][k]) for a in traj.arms},
            "q": {a: [float(v) for v in traj.joints[a][k]] for a in traj.arms},
            "excluded": report.tick_reasons[k],
        })
    return {
        "episode_id": ep.episode_id,
        "source": entry.source,
        "weight": entry.weight,
        "instruction": ep.instruction,
        "task_label": ep.task_label,
        "bundle": bundle,
        "chunks": [c.to_json() for c in ep.chunks],
        "ticks": ticks,
    }


# --- processing


@dataclass
class StageContext:
    profile: RobotProfile
    model: RobotModel
    quality: QualityProfile
    tick_hz: float = 30.0

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "StageContext":
        profile = RobotProfile.load(config.robot_profile)
        quality = QualityProfile.load(config.quality_profile) if config.quality_profile else QualityProfile()
        return cls(profile, profile.load_model(), quality, config.tick_hz)


@dataclass
class SessionResult:
    episode: Episode
    trajectory: RetargetedTrajectory
    report: ValidationReport
    path: Path | None = None


def process_session(bundle, ctx: StageContext, store=None) -> SessionResult:
    """Parse, align, filter, calibrate, retarget, validate and segment one session bundle."""
    bundle = Path(bundle)
    session = parse_session(bundle)
    seq = align_streams(session, ctx.tick_hz)
    q = ctx.quality
    blur = filter_blurred(seq, q.blur_threshold)
    motion = check_motion_limits(seq, q.v_max_mps, q.a_max_mps2)
    spans = stationary_spans(seq, q.stationary_window_ticks, q.stationary_eps_m)
    thinned = downsample_stationary(seq, spans, q.keep_period_ticks)
    calib = calibrate_frames(session, ctx.profile, ctx.model, ctx.tick_hz)
    traj = retarget(thinned, calib, ctx.model, ctx.profile)
    report = validate_trajectory(traj, ctx.model, QualityOutputs.from_stages(len(seq), thinned, blur, motion),
                                 ctx.profile)
    chunks: list[Chunk] = build_chunks(traj, load_annotations(bundle))
    episode = Episode(
        episode_id=session.session_id,
        session_id=session.session_id,
        source=session.source,
        instruction=session.instruction,
        chunks=chunks,
        duration=float(seq.ticks[-1].t - seq.ticks[0].t),
        verdict=report.verdict,
        operator_id=session.operator_id,
        collected_at=session.collected_at,
        extra={
            "bundle": str(bundle),
            "robot_name": ctx.profile.robot_name,
            "arms": list(traj.arms),
            "gripper_kind": seq.gripper_kind,
            "gripper_range": list(traj.gripper_range),
            "tick_hz": ctx.tick_hz,
            "stationary_spans": [[s.start_tick, s.end_tick, s.arm_id] for s in spans],
            "calibration": {
                "world_to_base": calib.world_to_base.to_json(),
                "measured_baseline": calib.measured_baseline,
                "robot_baseline": calib.robot_baseline,
                "warnings": list(calib.warnings),
            },
        },
    )
    logger.info("%s: %s, %d/%d ticks survive", session.session_id, report.verdict,
                report.ticks_out, report.ticks_in)
    logger.debug("session processed", extra={"event": {
        "session": session.session_id, "verdict": report.verdict, "counts": report.counts}})
    path = write_episode(store, episode, traj, report) if store is not None else None
    return SessionResult(episode, traj, report, path)


@dataclass
class BatchSummary:
    processed: list[tuple[str, str]] = field(default_factory=list)  # (bundle, verdict)
    failures: list[tuple[str, str]] = field(default_factory=list)  # (bundle, error)

    @property
    def ok(self) -> bool:
        return not self.failures


_WORKER_CTX: StageContext | None = None


def _init_worker(config: PipelineConfig) -> None:
    global _WORKER_CTX
    _WORKER_CTX = StageContext.from_config(config)


def _run_one(bundle: str, store: str | None, ctx: StageContext | None = None) -> tuple[str, str | None, str | None]:
    ctx = ctx or _WORKER_CTX
    try:
        res = process_session(bundle, ctx, store)
        return bundle, res.report.verdict, None
    except (G0Error, OSError, ValueError, KeyError) as exc:
        return bundle, None, f"{type(exc).__name__}: {exc}"


def process_batch(bundles, config: PipelineConfig, store) -> BatchSummary:
    """Process every bundle; a failing bundle is reported and never stops the others."""
    bundles = [str(b) for b in bundles]
    store = str(store) if store is not None else None
    if store is not None:
        Path(store).mkdir(parents=True, exist_ok=True)
    if config.workers > 1 and len(bundles) > 1:
        with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(config,)) as pool:
            results = list(pool.map(_run_one, bundles, [store] * len(bundles)))
    else:
        ctx = StageContext.from_config(config)
        results = [_run_one(b, store, ctx) for b in bundles]
    summary = BatchSummary()
    for bundle, verdict, error in results:
        if error is None:
            summary.processed.append((bundle, verdict))
        else:
            logger.error("%s: %s", bundle, error)
            summary.failures.append((bundle, error))
    return summary
