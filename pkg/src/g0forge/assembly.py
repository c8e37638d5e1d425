"""Data-mixing manifests, open-loop playback files and training shards."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .episodes import SOURCES, Episode
from .errors import (
    ChecksumWriteFailure,
    InsufficientPool,
    InvalidEpisode,
    MissingEpisode,
    ReplayDeviation,
    UnsampledGap,
)
from .kinematics import RobotModel, forward_kinematics
from .retarget import RetargetedTrajectory

STRATEGIES = ("pure_real", "pure_robot_free", "augmentation", "substitution")
PHASES = (None, "pretrain", "finetune")
PRNG_NAME = "splitmix64-fisher-yates"
MASK64 = (1 << 64) - 1
MAX_GAP_S = 1.0
REPLAY_TOL_M = 0.004


# --- sampling


class SplitMix64:
    """SplitMix64 (Steele, Lea, Flood 2014). Constants below are the whole algorithm.

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)          all arithmetic mod 2**64
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def shuffled(ids, rng: SplitMix64) -> list[str]:
    """Fisher-Yates from the top: for i = n-1..1 swap i with next() % (i + 1)."""
    out = sorted(ids)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


@dataclass(frozen=True)
class MixEntry:
    episode_id: str
    source: str
    weight: float = 1.0  # reserved for weighted mixing; 1.0 in every current strategy


@dataclass
class MixManifest:
    name: str
    strategy: str
    entries: list[MixEntry]
    seed: int
    phase: str | None = None

    @property
    def counts(self) -> dict[str, int]:
        return {s: sum(e.source == s for e in self.entries) for s in SOURCES}

    @property
    def total(self) -> int:
        return len(self.entries)

    @property
    def ratio(self) -> str:
        return mix_ratio(self.counts["robot_free"], self.counts["real_robot"])

    def to_json(self) -> dict:
        c = self.counts
        return {
            "name": self.name,
            "strategy": self.strategy,
            "phase": self.phase,
            "seed": self.seed,
            "prng": PRNG_NAME,
            "counts": {"robot_free": c["robot_free"], "real_robot": c["real_robot"]},
            "ratio": self.ratio,
            "total": self.total,
            "entries": [{"episode_id": e.episode_id, "source": e.source, "weight": e.weight}
                        for e in self.entries],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "MixManifest":
        entries = [MixEntry(e["episode_id"], e["source"], float(e.get("weight", 1.0))) for e in d["entries"]]
        return cls(d["name"], d["strategy"], entries, int(d["seed"]), d.get("phase"))

    @classmethod
    def load(cls, path) -> "MixManifest":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def mix_ratio(n_f: int, n_r: int) -> str:
    """``n_f:n_r`` reduced by their gcd; a zero side leaves the ratio unreduced."""
    if n_f == 0 or n_r == 0:
        return f"{n_f}:{n_r}"
    g = math.gcd(n_f, n_r)
    return f"{n_f // g}:{n_r // g}"


def build_mix_manifest(pools: dict[str, list[str]], strategy: str, counts: dict[str, int], seed: int,
                       name: str | None = None, phase: str | None = None) -> MixManifest:
    """Sample ``counts[source]`` episodes from each pool without replacement.

    Each pool is sorted, shuffled with one SplitMix64 stream seeded by
    ``seed`` (robot-free pool first, then real-robot), and its prefix taken.
    Pools must already be restricted to valid episodes.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    n_f = int(counts.get("robot_free", 0))
    n_r = int(counts.get("real_robot", 0))
    if n_f < 0 or n_r < 0:
        raise ValueError("counts must be non-negative")
    if strategy == "pure_real" and n_f:
        raise ValueError("pure_real takes no robot-free episodes")
    if strategy == "pure_robot_free" and n_r:
        raise ValueError("pure_robot_free takes no real-robot episodes")
    if strategy in ("augmentation", "substitution") and not (n_f and n_r):
        raise ValueError(f"{strategy} needs both robot-free and real-robot episodes")

    rng = SplitMix64(seed)
    entries = []
    for source, n in (("robot_free", n_f), ("real_robot", n_r)):
        pool = sorted(set(pools.get(source, [])))
        if n > len(pool):
            raise InsufficientPool(source, n, len(pool))
        entries += [MixEntry(eid, source) for eid in shuffled(pool, rng)[:n]]
    ids = [e.episode_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("an episode id appears in more than one pool")
    return MixManifest(name or f"{strategy}_{n_f}_{n_r}_s{seed}", strategy, entries, seed, phase)


# --- playback


@dataclass
class PlaybackFile:
    robot_name: str
    control_hz: float
    session_id: str
    arms: tuple[str, ...]
    joints_per_arm: int
    rows: np.ndarray  # t, joints per arm in arm order, gripper width per arm
    max_deviation: float = 0.0

    def header(self) -> str:
        meta = {"robot": self.robot_name, "control_hz": self.control_hz, "arms": list(self.arms),
                "joints_per_arm": self.joints_per_arm, "session": self.session_id}
        return "#G0PLAYBACK " + json.dumps(meta, separators=(",", ":"))

    def dumps(self) -> str:
        lines = [self.header()]
        lines += [",".join(format(float(v), ".9g") for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def read_playback(path) -> PlaybackFile:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#G0PLAYBACK "):
        raise ValueError(f"{path}: missing #G0PLAYBACK header")
    meta = json.loads(lines[0][len("#G0PLAYBACK "):])
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln])
    return PlaybackFile(meta["robot"], meta["control_hz"], meta.get("session", ""), tuple(meta["arms"]),
                        meta["joints_per_arm"], rows)


def interpolate_at(times: np.ndarray, values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Per-column linear interpolation; grid points on a knot return the knot row exactly."""
    out = np.empty((len(grid),) + values.shape[1:])
    for g, t in enumerate(grid):
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i >= 0 and times[i] == t:
            out[g] = values[i]
        elif i >= len(times) - 1:
            out[g] = values[-1]
        else:
            u = (t - times[i]) / (times[i + 1] - times[i])
            out[g] = values[i] + u * (values[i + 1] - values[i])
    return out


def playback_grid(t0: float, t1: float, hz: float) -> np.ndarray:
    n = int(math.floor((t1 - t0) * hz + 1e-9)) + 1
    return np.array([t0 + k / hz for k in range(n)])


def export_playback(episode: Episode, traj: RetargetedTrajectory, control_hz: float,
                    model: RobotModel, base_config=None, tol: float = REPLAY_TOL_M) -> PlaybackFile:
    """Resample joint solutions to ``control_hz`` and check the replayed TCP path.

    Every row is run through forward kinematics and compared with the linearly
    interpolated TCP target path; a deviation above ``tol`` raises
    :class:`ReplayDeviation`.
    """
    if not episode.valid:
        raise InvalidEpisode(f"{episode.episode_id}: verdict is {episode.verdict}")
    if control_hz <= 0:
        raise ValueError("control_hz must be positive")
    times = np.asarray(traj.times, dtype=float)
    if len(times) < 2:
        raise InvalidEpisode(f"{episode.episode_id}: fewer than two waypoints")
    gaps = np.diff(times)
    if np.any(gaps > MAX_GAP_S):
        k = int(np.argmax(gaps))
        raise UnsampledGap(f"{episode.episode_id}: {gaps[k]:.3f} s without samples after t={times[k]:.3f}")

    grid = playback_grid(times[0], times[-1], control_hz)
    arms = tuple(traj.arms)
    joints = {a: interpolate_at(times, traj.joints[a], grid) for a in arms}
    widths = {a: interpolate_at(times, np.asarray(traj.widths[a])[:, None], grid)[:, 0] for a in arms}
    targets = {a: interpolate_at(times, traj.tcp_positions(a), grid) for a in arms}

    base = np.zeros(model.dof) if base_config is None else np.asarray(base_config, dtype=float)
    worst = 0.0
    for g in range(len(grid)):
        q = base.copy()
        for a in arms:
            q[model.arm_columns(a)] = joints[a][g]
        for a in arms:
            p = np.asarray(forward_kinematics(model, q, model.ee_link(a)).translation)
            worst = max(worst, float(np.linalg.norm(p - targets[a][g])))
    if worst > tol:
        raise ReplayDeviation(f"{episode.episode_id}: replayed TCP deviates {worst * 1000:.2f} mm from the target path")

    rows = np.column_stack([grid] + [joints[a] for a in arms] + [widths[a] for a in arms])
    return PlaybackFile(traj.robot_name, float(control_hz), traj.session_id, arms,
                        traj.joints[arms[0]].shape[1], rows, worst)


# --- training shards


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def export_training_shards(manifest: MixManifest, store, out_dir, shard_size: int = 100,
                           record_fn=None) -> list[Path]:
    """Write manifest episodes, in manifest order, as JSONL shards with sha256 sidecars.

    ``record_fn(episode_dir, entry)`` builds one record; the default reads the
    episode store layout written by :mod:`g0forge.pipeline`.
    """
    if shard_size < 1:
        raise ValueError("shard_size must be positive")
    store = Path(store)
    out_dir = Path(out_dir)
    for e in manifest.entries:
        if not (store / e.episode_id / "episode.json").is_file():
            raise MissingEpisode(e.episode_id)
    if record_fn is None:
        from .pipeline import shard_record as record_fn

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s, start in enumerate(range(0, len(manifest.entries), shard_size)):
        path = out_dir / f"shard_{s:05d}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for e in manifest.entries[start:start + shard_size]:
                rec = record_fn(store / e.episode_id, e)
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
        digest = sha256_file(path)
        try:
            Path(str(path) + ".sha256").write_text(f"{digest}  {path.name}\n", encoding="utf-8")
        except OSError as exc:
            raise ChecksumWriteFailure(f"{path}: {exc}") from exc
        paths.append(path)
    return paths
