"""Alignment of pose, video and instruction streams onto a uniform tick grid."""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyStream, NoTemporalOverlap
from .ingest import FrameRef, PoseSample, RawSession
from .transforms import Pose6D, slerp

FRAME_GAP = "frame_gap"
POSE_EXTRAPOLATED = "pose_extrapolated"
STATIONARY_KEPT = "stationary_kept"
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class SyncedTick:
    t: float
    index: int  # position on the original uniform grid
    poses: dict[str, PoseSample]
    frames: dict[str, FrameRef | None]
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class SyncedSequence:
    session_id: str
    instruction: str
    ticks: tuple[SyncedTick, ...]
    tick_hz: float
    uniform: bool = True
    ego_camera: str = "ego"
    gripper_kind: str = "H"
    root: Path | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.ticks)

    @property
    def times(self) -> np.ndarray:
        return np.array([tk.t for tk in self.ticks])

    @property
    def arms(self) -> list[str]:
        return list(self.ticks[0].poses) if self.ticks else []

    def positions(self, arm: str) -> np.ndarray:
        return np.array([tk.poses[arm].pose.translation for tk in self.ticks])

    def apertures(self, arm: str) -> np.ndarray:
        return np.array([tk.poses[arm].gripper_aperture for tk in self.ticks])

    def frame_file(self, frame: FrameRef) -> Path:
        return Path(self.root) / "frames" / frame.camera_id / frame.image_path


def _lerp(a: float, b: float, u: float) -> float:
    return a + u * (b - a)


def interpolate_sample(a: PoseSample, b: PoseSample, t: float) -> PoseSample:
    """Pose at time ``t`` between bracketing samples: linear translation, slerp rotation."""
    u = (t - a.t) / (b.t - a.t)
    pa, pb = a.pose, b.pose
    p = tuple(_lerp(x, y, u) for x, y in zip(pa.translation, pb.translation))
    q = tuple(slerp(pa.rotation, pb.rotation, u))
    raw = None
    if a.aperture_raw is not None and b.aperture_raw is not None:
        raw = _lerp(a.aperture_raw, b.aperture_raw, u)
    return PoseSample(
        t=t,
        pose=Pose6D(p, q),
        gripper_aperture=min(1.0, max(0.0, _lerp(a.gripper_aperture, b.gripper_aperture, u))),
        tracking_confidence=_lerp(a.tracking_confidence, b.tracking_confidence, u),
        aperture_raw=raw,
    )


def sample_stream(stream: Sequence[PoseSample], times: Sequence[float]) -> tuple[list[PoseSample], list[bool]]:
    """Interpolate ``stream`` at each of ``times``.

    Exact knot hits return the stored sample unchanged. Times outside the
    stream are clamped to the end sample and reported in the second list.
    """
    ts = [s.t for s in stream]
    out = []
    extrapolated = []
    for t in times:
        i = bisect_right(ts, t) - 1
        if i >= 0 and ts[i] == t:
            out.append(stream[i])
            extrapolated.append(False)
        elif i < 0 or i >= len(ts) - 1:
            edge = stream[0] if i < 0 else stream[-1]
            out.append(replace(edge, t=t))
            extrapolated.append(abs(t - edge.t) > _TIME_EPS)
        else:
            out.append(interpolate_sample(stream[i], stream[i + 1], t))
            extrapolated.append(False)
    return out, extrapolated


def tick_grid(start: float, end: float, hz: float) -> list[float]:
    n = int(math.floor((end - start) * hz + _TIME_EPS)) + 1
    return [start + k / hz for k in range(n)]


def resample_poses(stream: Sequence[PoseSample], target_hz: float) -> list[PoseSample]:
    """Resample onto a uniform grid over ``[t_first, t_last]``."""
    if len(stream) < 2:
        raise EmptyStream("stream")
    grid = tick_grid(stream[0].t, stream[-1].t, target_hz)
    return sample_stream(stream, grid)[0]


def nearest_frame(stream: Sequence[FrameRef], ts: Sequence[float], t: float) -> FrameRef | None:
    if not stream:
        return None
    i = bisect_right(ts, t)
    if i == 0:
        return stream[0]
    if i == len(ts):
        return stream[-1]
    before, after = stream[i - 1], stream[i]
    return before if t - before.t <= after.t - t else after


def align_streams(session: RawSession, tick_hz: float = 30.0) -> SyncedSequence:
    """Align every pose and camera stream of ``session`` onto a ``tick_hz`` grid.

    The grid starts at the latest pose-stream start and stops at the earliest
    pose-stream end, so poses are never extrapolated. Frames are matched to
    the nearest tick; matches farther than half a video period are dropped
    and the tick is flagged ``frame_gap``.
    """
    if tick_hz <= 0:
        raise ValueError("tick_hz must be positive")
    streams = session.pose_streams
    for arm, stream in streams.items():
        if len(stream) < 2:
            raise EmptyStream(arm)
    start = max(s[0].t for s in streams.values())
    end = min(s[-1].t for s in streams.values())
    if end < start:
        raise NoTemporalOverlap(f"pose streams of {session.session_id} do not overlap in time")
    grid = tick_grid(start, end, tick_hz)

    sampled = {}
    extrap = {}
    for arm, stream in streams.items():
        sampled[arm], extrap[arm] = sample_stream(stream, grid)

    half_period = 0.5 / session.device_meta.nominal_video_hz
    cameras = sorted(session.frame_streams)
    frame_ts = {c: [f.t for f in session.frame_streams[c]] for c in cameras}

    ticks = []
    for k, t in enumerate(grid):
        flags = set()
        frames = {}
        for cam in cameras:
            f = nearest_frame(session.frame_streams[cam], frame_ts[cam], t)
            if f is None or abs(f.t - t) > half_period + _TIME_EPS:
                frames[cam] = None
                flags.add(FRAME_GAP)
            else:
                frames[cam] = f
        if any(extrap[arm][k] for arm in streams):
            flags.add(POSE_EXTRAPOLATED)
        ticks.append(SyncedTick(t, k, {arm: sampled[arm][k] for arm in streams}, frames, frozenset(flags)))

    return SyncedSequence(
        session_id=session.session_id,
        instruction=session.instruction,
        ticks=tuple(ticks),
        tick_hz=tick_hz,
        ego_camera=session.device_meta.ego_camera,
        gripper_kind=session.device_meta.gripper_kind,
        root=session.root,
    )


def tick_record(tick: SyncedTick) -> dict:
    return {
        "t": tick.t,
        "index": tick.index,
        "poses": {
            arm: {"p": list(s.pose.translation), "q": list(s.pose.rotation),
                  "aperture": s.gripper_aperture, "conf": s.tracking_confidence}
            for arm, s in tick.poses.items()
        },
        "frames": {c: (None if f is None else {"t": f.t, "path": f.image_path})
                   for c, f in tick.frames.items()},
        "flags": sorted(tick.flags),
    }


def dump_sequence(seq: SyncedSequence, path) -> None:
    """Debug dump, one tick per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for tick in seq.ticks:
            fh.write(json.dumps(tick_record(tick)) + "\n")
