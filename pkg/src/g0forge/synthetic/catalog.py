"""Metadata-only episode stores for mixing and statistics fixtures."""
from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

from ..episodes import Chunk, Episode
from ..pipeline import dump_json, write_text

EPOCH = datetime(2026, 3, 2, 9, 0, 0, tzinfo=timezone.utc)


def stub_episode(episode_id: str, source: str, verdict: str = "valid", operator_id: str = "op1",
                 collected_at: datetime = EPOCH, duration: float = 20.0,
                 instruction: str = "Pick up the cup") -> Episode:
    return Episode(episode_id, episode_id, source, instruction, [Chunk(0.0, duration)], duration, verdict,
                   operator_id, collected_at.isoformat())


def write_catalog(store, n_robot_free: int, n_real: int, n_invalid: int = 0) -> Path:
    """Episode.json-only store with the requested pool sizes (plus invalid robot-free extras)."""
    store = Path(store)
    eps = [stub_episode(f"rf_{i:05d}", "robot_free") for i in range(n_robot_free)]
    eps += [stub_episode(f"rr_{i:05d}", "real_robot") for i in range(n_real)]
    eps += [stub_episode(f"rfx_{i:05d}", "robot_free", "invalid") for i in range(n_invalid)]
    for ep in eps:
        d = store / ep.episode_id
        d.mkdir(parents=True, exist_ok=True)
        write_text(d / "episode.json", dump_json(ep.to_json()))
    return store


def throughput_block(n: int = 10, span_s: float = 386.27, step_s: int = 39,
                     operator_id: str = "op1") -> list[Episode]:
    """``n`` episodes of one operator starting ``step_s`` apart; the wall-clock span is ``span_s``.

    Starts fall on whole seconds and the last episode's duration takes the
    remainder, so the span survives ISO timestamp rounding.
    """
    last = span_s - step_s * (n - 1)
    if last <= 0:
        raise ValueError("span too short for the requested spacing")
    return [stub_episode(f"{operator_id}_blk_{i:03d}", "robot_free", operator_id=operator_id,
                         collected_at=EPOCH + timedelta(seconds=i * step_s),
                         duration=float(step_s if i < n - 1 else last))
            for i in range(n)]
