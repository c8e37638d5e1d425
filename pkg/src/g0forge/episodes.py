"""Sub-task segmentation, keyframes, annotations and corpus statistics."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .retarget import RetargetedTrajectory

CLOSE_FRAC = 0.25
OPEN_FRAC = 0.75
SUSTAIN_TICKS = 10
SLOW_SPEED = 0.02
SLOW_SEPARATION = 10
BLOCK_GAP_S = 600.0
SOURCES = ("robot_free", "real_robot")


@dataclass
class Chunk:
    start_t: float
    end_t: float
    kind: str = "free"  # free | manipulation
    sub_instruction: str = ""
    keyframes: list[int] = field(default_factory=list)  # grid tick indices
    objects: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"start_t": self.start_t, "end_t": self.end_t, "kind": self.kind,
                "sub_instruction": self.sub_instruction, "keyframes": list(self.keyframes),
                "objects": self.objects}

    @classmethod
    def from_json(cls, d: dict) -> "Chunk":
        return cls(d["start_t"], d["end_t"], d.get("kind", "free"), d.get("sub_instruction", ""),
                   list(d.get("keyframes", [])), list(d.get("objects", [])))


@dataclass
class SegmentRules:
    close_frac: float = CLOSE_FRAC
    open_frac: float = OPEN_FRAC
    sustain_ticks: int = SUSTAIN_TICKS

    def __post_init__(self):
        if not 0.0 < self.close_frac <= self.open_frac <= 1.0:
            raise ValueError("need 0 < close_frac <= open_frac <= 1")
        if self.sustain_ticks < 1:
            raise ValueError("sustain_ticks must be positive")


def normalize_task(text: str) -> str:
    return text.strip().lower()


@dataclass
class Episode:
    episode_id: str
    session_id: str
    source: str
    instruction: str
    chunks: list[Chunk]
    duration: float
    verdict: str
    operator_id: str = ""
    collected_at: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    @property
    def task_label(self) -> str:
        return normalize_task(self.instruction)

    @property
    def valid(self) -> bool:
        return self.verdict == "valid"

    def to_json(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "session_id": self.session_id,
            "source": self.source,
            "instruction": self.instruction,
            "task_label": self.task_label,
            "operator_id": self.operator_id,
            "collected_at": self.collected_at,
            "duration": self.duration,
            "verdict": self.verdict,
            "chunks": [c.to_json() for c in self.chunks],
            **self.extra,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Episode":
        known = {"episode_id", "session_id", "source", "instruction", "task_label", "operator_id",
                 "collected_at", "duration", "verdict", "chunks"}
        return cls(d["episode_id"], d["session_id"], d["source"], d["instruction"],
                   [Chunk.from_json(c) for c in d["chunks"]], float(d["duration"]), d["verdict"],
                   d.get("operator_id", ""), d.get("collected_at", ""),
                   {k: v for k, v in d.items() if k not in known})


# --- segmentation


def gripper_events(widths: np.ndarray, width_max: float, rules: SegmentRules) -> list[tuple[int, str]]:
    """Close and open events of one gripper as (position, "close" | "open").

    A close fires on the first tick below ``close_frac * width_max``; the
    gripper then counts as closed until its width stays above
    ``open_frac * width_max`` for ``sustain_ticks`` ticks, and the open event
    sits on the first tick of that run. Every gripper counts as open before
    the first tick, so one that starts closed gets a close event at tick 0.
    """
    lo = rules.close_frac * width_max
    hi = rules.open_frac * width_max
    events = []
    closed = False
    run = 0
    for k, w in enumerate(widths):
        if not closed:
            if w < lo:
                closed = True
                run = 0
                events.append((k, "close"))
        else:
            run = run + 1 if w > hi else 0
            if run >= rules.sustain_ticks:
                closed = False
                run = 0
                events.append((k - rules.sustain_ticks + 1, "open"))
    return events


def segment(traj: RetargetedTrajectory, rules: SegmentRules | None = None) -> list[Chunk]:
    """Split a trajectory into chunks at every gripper event of either arm.

    Chunks share their boundary times and together cover ``[t_first, t_last]``.
    A chunk is a manipulation chunk when some gripper is closed at its first
    tick. Keyframes are filled in by :func:`detect_keyframes`.
    """
    rules = rules or SegmentRules()
    n = len(traj)
    if n == 0:
        return []
    width_max = traj.gripper_range[1]
    events = {arm: gripper_events(traj.widths[arm], width_max, rules) for arm in traj.arms}
    cuts = sorted({k for evs in events.values() for k, _ in evs if 0 < k < n - 1})
    bounds = [0] + cuts + [n - 1]

    def closed_at(arm, k):
        state = False
        for pos, kind in events[arm]:
            if pos > k:
                break
            state = kind == "close"
        return state

    chunks = []
    for a, b in zip(bounds, bounds[1:]):
        kind = "manipulation" if any(closed_at(arm, a) for arm in traj.arms) else "free"
        chunks.append(Chunk(float(traj.times[a]), float(traj.times[b]), kind))
    return chunks


def chunk_positions(chunk: Chunk, traj: RetargetedTrajectory, last: bool) -> tuple[int, int]:
    """First and last trajectory positions owned by ``chunk``."""
    t = traj.times
    a = int(np.searchsorted(t, chunk.start_t, side="left"))
    b = int(np.searchsorted(t, chunk.end_t, side="left"))
    if not last:
        b -= 1
    return a, min(max(a, b), len(t) - 1)


def tcp_speed(traj: RetargetedTrajectory) -> np.ndarray:
    """Largest TCP speed over the arms at every tick."""
    if len(traj) < 2:
        return np.zeros(len(traj))
    speeds = [np.linalg.norm(np.gradient(traj.tcp_positions(arm), traj.times, axis=0), axis=1)
              for arm in traj.arms]
    return np.max(speeds, axis=0)


def slow_points(speed: np.ndarray, a: int, b: int, threshold: float = SLOW_SPEED,
                separation: int = SLOW_SEPARATION) -> list[int]:
    """One minimum per run of sub-threshold speed in ``[a, b]``, runs thinned to ``separation``.

    Within a run the slowest tick wins, ties going to the tick nearest the
    run's centre; candidates are then accepted slowest first while they stay
    ``separation`` ticks from every accepted one.
    """
    candidates = []
    k = a
    while k <= b:
        if speed[k] >= threshold:
            k += 1
            continue
        j = k
        while j + 1 <= b and speed[j + 1] < threshold:
            j += 1
        centre = 0.5 * (k + j)
        best = min(range(k, j + 1), key=lambda i: (speed[i], abs(i - centre), i))
        candidates.append(best)
        k = j + 1
    accepted = []
    for c in sorted(candidates, key=lambda i: (speed[i], i)):
        if all(abs(c - o) >= separation for o in accepted):
            accepted.append(c)
    return sorted(accepted)


def crossing_positions(traj: RetargetedTrajectory, a: int, b: int, close_frac: float = CLOSE_FRAC) -> list[int]:
    """Ticks in ``(a, b]`` where some gripper crosses the close threshold either way."""
    thr = close_frac * traj.gripper_range[1]
    out = set()
    for arm in traj.arms:
        below = traj.widths[arm] < thr
        for k in range(max(a, 1), b + 1):
            if below[k] != below[k - 1]:
                out.add(k)
    return sorted(out)


def detect_keyframes(chunk: Chunk, traj: RetargetedTrajectory, last: bool = True,
                     rules: SegmentRules | None = None) -> list[int]:
    """Start, end, gripper crossings and slow points of ``chunk``, as grid tick indices."""
    rules = rules or SegmentRules()
    a, b = chunk_positions(chunk, traj, last)
    positions = {a, b}
    positions.update(crossing_positions(traj, a, b, rules.close_frac))
    positions.update(slow_points(tcp_speed(traj), a, b))
    return sorted(traj.tick_indices[p] for p in positions)


def annotate(chunks: list[Chunk], annotations: dict | None) -> list[Chunk]:
    """Copy sub-instructions and object labels from sidecar chunks by largest time overlap."""
    if not annotations:
        return chunks
    items = annotations.get("chunks", [])
    for chunk in chunks:
        best, best_overlap = None, 0.0
        for item in items:
            overlap = min(chunk.end_t, float(item["end_t"])) - max(chunk.start_t, float(item["start_t"]))
            if overlap > best_overlap + 1e-12:
                best, best_overlap = item, overlap
        if best is not None:
            chunk.sub_instruction = str(best.get("sub_instruction", ""))
            chunk.objects = [dict(o) for o in best.get("objects", [])]
    return chunks


def load_annotations(bundle) -> dict | None:
    path = Path(bundle) / "annotations.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def build_chunks(traj: RetargetedTrajectory, annotations: dict | None = None,
                 rules: SegmentRules | None = None) -> list[Chunk]:
    chunks = segment(traj, rules)
    for i, chunk in enumerate(chunks):
        chunk.keyframes = detect_keyframes(chunk, traj, last=i == len(chunks) - 1, rules=rules)
    return annotate(chunks, annotations)


# --- statistics


@dataclass
class CorpusStats:
    episode_count: int
    total_hours: float
    validity_rate: float
    episodes_per_hour: dict[str, float]  # operator -> best block rate
    peak_episodes_per_hour: float
    mean_episodes_per_hour: float
    task_histogram: list[tuple[str, int]]
    blocks: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "episode_count": self.episode_count,
            "total_hours": self.total_hours,
            "validity_rate": self.validity_rate,
            "episodes_per_hour": {
                "peak": self.peak_episodes_per_hour,
                "mean": self.mean_episodes_per_hour,
                "per_operator": self.episodes_per_hour,
            },
            "task_histogram": [list(x) for x in self.task_histogram],
            "blocks": self.blocks,
        }

    def table(self) -> str:
        lines = [
            f"{'episodes':<24}{self.episode_count}",
            f"{'total_hours':<24}{self.total_hours:.4f}",
            f"{'validity_rate':<24}{self.validity_rate:.2f}",
            f"{'peak_episodes_per_hour':<24}{self.peak_episodes_per_hour:.1f}",
            f"{'mean_episodes_per_hour':<24}{self.mean_episodes_per_hour:.1f}",
            "",
            f"{'task':<48}count",
        ]
        lines += [f"{label:<48}{count}" for label, count in self.task_histogram]
        return "\n".join(lines)


def parse_time(stamp: str) -> float:
    return datetime.fromisoformat(stamp.replace("Z", "+00:00")).timestamp()


def operator_blocks(episodes, gap_s: float = BLOCK_GAP_S) -> list[list[Episode]]:
    """Group by operator, then split where an episode starts ``gap_s`` or more after the previous one ended."""
    by_op: dict[str, list] = {}
    for ep in episodes:
        by_op.setdefault(ep.operator_id, []).append(ep)
    blocks = []
    for op in sorted(by_op):
        eps = sorted(by_op[op], key=lambda e: (parse_time(e.collected_at), e.episode_id))
        block = [eps[0]]
        for prev, ep in zip(eps, eps[1:]):
            if parse_time(ep.collected_at) - (parse_time(prev.collected_at) + prev.duration) >= gap_s:
                blocks.append(block)
                block = []
            block.append(ep)
        blocks.append(block)
    return blocks


def block_rate(block: list[Episode]) -> tuple[float, float]:
    """(wall-clock span in seconds, episodes per hour) of one block."""
    start = min(parse_time(e.collected_at) for e in block)
    end = max(parse_time(e.collected_at) + e.duration for e in block)
    span = end - start
    return span, (len(block) * 3600.0 / span if span > 0 else 0.0)


def compute_stats(episodes, gap_s: float = BLOCK_GAP_S) -> CorpusStats:
    episodes = sorted(episodes, key=lambda e: e.episode_id)
    n = len(episodes)
    if n == 0:
        return CorpusStats(0, 0.0, 0.0, {}, 0.0, 0.0, [])
    valid = sum(e.valid for e in episodes)
    hist = Counter(e.task_label for e in episodes)
    timed = [e for e in episodes if e.collected_at]
    blocks_out = []
    per_op: dict[str, float] = {}
    rates = []
    for block in operator_blocks(timed, gap_s) if timed else []:
        span, rate = block_rate(block)
        op = block[0].operator_id
        blocks_out.append({"operator_id": op, "episodes": len(block), "span_s": span, "episodes_per_hour": rate})
        per_op[op] = max(per_op.get(op, 0.0), rate)
        rates.append(rate)
    return CorpusStats(
        episode_count=n,
        total_hours=math.fsum(e.duration for e in episodes) / 3600.0,
        validity_rate=valid / n,
        episodes_per_hour=per_op,
        peak_episodes_per_hour=max(rates, default=0.0),
        mean_episodes_per_hour=math.fsum(rates) / len(rates) if rates else 0.0,
        task_histogram=sorted(hist.items(), key=lambda kv: (-kv[1], kv[0])),
        blocks=blocks_out,
    )
