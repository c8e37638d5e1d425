"""Visual cleansing and motion filtering on a synced sequence."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageTooSmall, OverlappingSpans, SequenceTooShort
from .ingest import FrameRef
from .sync import STATIONARY_KEPT, SyncedSequence

logger = logging.getLogger(__name__)

APERTURE_STILL = 0.05


@dataclass(frozen=True)
class QualityProfile:
    blur_threshold: float = 100.0
    stationary_window_ticks: int = 15
    stationary_eps_m: float = 0.002
    keep_period_ticks: int = 15
    v_max_mps: float = 1.5
    a_max_mps2: float = 10.0

    @classmethod
    def from_dict(cls, d: dict | None) -> "QualityProfile":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (d or {}).items() if k in names})

    @classmethod
    def load(cls, path) -> "QualityProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- blur


def blur_score(image) -> float:
    """Population variance of the 4-neighbour Laplacian over interior pixels."""
    I = np.asarray(image, dtype=np.float64)
    if I.ndim != 2 or I.shape[0] < 3 or I.shape[1] < 3:
        raise ImageTooSmall(f"need a 2-D image of at least 3x3, got shape {I.shape}")
    lap = I[:-2, 1:-1] + I[2:, 1:-1] + I[1:-1, :-2] + I[1:-1, 2:] - 4.0 * I[1:-1, 1:-1]
    return float(lap.var())


def load_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64)


@dataclass(frozen=True)
class FrameQuality:
    frame: FrameRef
    sharpness: float
    verdict: str  # keep | blurred


@dataclass
class BlurResult:
    per_tick: list[dict[str, FrameQuality]]
    excluded: set[int]  # grid indices of ticks whose egocentric frame is blurred or missing
    load_failures: list[str] = field(default_factory=list)


def filter_blurred(sequence: SyncedSequence, threshold: float) -> BlurResult:
    """Score every matched frame; exclude ticks whose egocentric frame is blurred.

    Wrist-camera blur is recorded but never excludes a tick. A frame that
    cannot be loaded counts as blurred. Ticks without an egocentric frame
    are left to the ``frame_gap`` flag.
    """
    cache: dict[Path, float | None] = {}
    failures = []
    per_tick = []
    excluded = set()
    for tick in sequence.ticks:
        row = {}
        for cam, frame in tick.frames.items():
            if frame is None:
                continue
            path = sequence.frame_file(frame)
            if path not in cache:
                try:
                    cache[path] = blur_score(load_gray(path))
                except (OSError, ImageTooSmall) as exc:
                    logger.warning("frame load failed: %s (%s)", path, exc)
                    failures.append(str(frame.camera_id + "/" + frame.image_path))
                    cache[path] = None
            score = cache[path]
            if score is None:
                row[cam] = FrameQuality(frame, 0.0, "blurred")
            else:
                row[cam] = FrameQuality(frame, score, "blurred" if score < threshold else "keep")
        ego = row.get(sequence.ego_camera)
        if ego is not None and ego.verdict == "blurred":
            excluded.add(tick.index)
        per_tick.append(row)
    return BlurResult(per_tick, excluded, failures)


# --- stationary spans


@dataclass(frozen=True)
class StationarySpan:
    start_tick: int
    end_tick: int  # inclusive
    arm_id: str  # arm with the largest deviation over the span
    max_deviation: float

    def __len__(self) -> int:
        return self.end_tick - self.start_tick + 1


def stationary_spans(sequence: SyncedSequence, window: int = 15, eps_pos: float = 0.002) -> list[StationarySpan]:
    """Maximal runs in which every arm stays within ``eps_pos`` of the run's first tick.

    Runs are grown greedily from their anchor; an arm's aperture must also stay
    within 0.05 of the anchor. Ticks already kept by an earlier downsampling
    pass never join a run, which makes downsampling idempotent. Returned
    spans are positions in ``sequence.ticks``.
    """
    if window < 2 or eps_pos <= 0:
        raise ValueError("window must be >= 2 and eps_pos > 0")
    n = len(sequence)
    arms = sequence.arms
    P = {a: sequence.positions(a) for a in arms}
    A = {a: sequence.apertures(a) for a in arms}
    kept = [STATIONARY_KEPT in tk.flags for tk in sequence.ticks]
    spans = []
    i = 0
    while i < n:
        if kept[i]:
            i += 1
            continue
        j = i + 1
        worst = {a: 0.0 for a in arms}
        while j < n and not kept[j]:
            devs = {a: float(np.linalg.norm(P[a][j] - P[a][i])) for a in arms}
            if any(devs[a] >= eps_pos or abs(A[a][j] - A[a][i]) >= APERTURE_STILL for a in arms):
                break
            for a in arms:
                worst[a] = max(worst[a], devs[a])
            j += 1
        if j - i >= window:
            arm = max(arms, key=lambda a: (worst[a], a))
            spans.append(StationarySpan(i, j - 1, arm, worst[arm]))
        i = j
    return spans


def retained_offsets(length: int, keep_period: int) -> list[int]:
    return sorted(set(range(0, length, keep_period)) | {length - 1})


def downsample_stationary(sequence: SyncedSequence, spans, keep_period: int = 15) -> SyncedSequence:
    """Thin each span to its first tick, last tick and every ``keep_period``-th tick."""
    if not spans:
        return sequence
    if keep_period < 1:
        raise ValueError("keep_period must be positive")
    ordered = sorted(spans, key=lambda s: s.start_tick)
    for a, b in zip(ordered, ordered[1:]):
        if b.start_tick <= a.end_tick:
            raise OverlappingSpans(f"spans {a} and {b} overlap")
    drop = set()
    mark = set()
    for s in ordered:
        keep = {s.start_tick + o for o in retained_offsets(len(s), keep_period)}
        for i in range(s.start_tick, s.end_tick + 1):
            (mark if i in keep else drop).add(i)
    ticks = []
    for i, tk in enumerate(sequence.ticks):
        if i in drop:
            continue
        if i in mark:
            tk = replace(tk, flags=tk.flags | {STATIONARY_KEPT})
        ticks.append(tk)
    return replace(sequence, ticks=tuple(ticks), uniform=False)


# --- human motion limits


@dataclass(frozen=True)
class MotionFlag:
    tick: int  # grid index
    arm_id: str
    kind: str  # over_velocity | over_acceleration
    value: float


def check_motion_limits(sequence: SyncedSequence, v_max: float = 1.5, a_max: float = 10.0) -> list[MotionFlag]:
    """Central-difference speed and acceleration of each arm's translation."""
    n = len(sequence)
    if n < 3:
        raise SequenceTooShort(f"need at least 3 ticks, got {n}")
    t = sequence.times
    flags = []
    for arm in sequence.arms:
        P = sequence.positions(arm)
        h0 = t[1:-1] - t[:-2]
        h1 = t[2:] - t[1:-1]
        vel = (P[2:] - P[:-2]) / (h0 + h1)[:, None]
        acc = 2.0 * ((P[2:] - P[1:-1]) / h1[:, None] - (P[1:-1] - P[:-2]) / h0[:, None]) / (h0 + h1)[:, None]
        speed = np.linalg.norm(vel, axis=1)
        accel = np.linalg.norm(acc, axis=1)
        for k in range(n - 2):
            idx = sequence.ticks[k + 1].index
            if speed[k] > v_max:
                flags.append(MotionFlag(idx, arm, "over_velocity", float(speed[k])))
            if accel[k] > a_max:
                flags.append(MotionFlag(idx, arm, "over_acceleration", float(accel[k])))
    return sorted(flags, key=lambda f: (f.tick, f.arm_id, f.kind))
