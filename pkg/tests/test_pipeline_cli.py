import json
import shutil

import pytest

from g0forge.assembly import MixManifest, read_playback
from g0forge.cli import build_parser, main, resolve_config
from g0forge.pipeline import PipelineConfig, StageContext, list_episodes, load_report, process_session
from g0forge.retarget import HARD_FAILURES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_process_writes_every_session(processed):
    assert processed["code"] == 0
    eps = list_episodes(processed["store"])
    assert len(eps) == 20
    assert sorted(e.episode_id for e in eps if not e.valid) == sorted(processed["defects"])
    for ep in eps:
        d = processed["store"] / ep.episode_id
        assert {p.name for p in d.iterdir()} == {"episode.json", "trajectory.jsonl", "report.json"}


def test_defects_attributed(processed):
    for sid, reason in processed["defects"].items():
        report = load_report(processed["store"] / sid)
        assert report.verdict == "invalid"
        hard = {k: report.counts[k] for k in HARD_FAILURES if report.counts[k]}
        assert list(hard) == [reason]


def test_reprocessing_is_idempotent(processed, tmp_path):
    ctx = StageContext.from_config(PipelineConfig.load(processed["config"]))
    bundle = processed["bundles"][2]
    process_session(bundle, ctx, tmp_path)
    process_session(bundle, ctx, tmp_path)
    for name in ("episode.json", "trajectory.jsonl", "report.json"):
        assert (tmp_path / bundle.name / name).read_bytes() == (processed["store"] / bundle.name / name).read_bytes()


def test_annotations_reach_the_episode(processed):
    ep = {e.episode_id: e for e in list_episodes(processed["store"])}["sess_008"]
    assert ep.chunks[0].sub_instruction == "reach for the cup"


def test_stats_cli(processed, capsys):
    code, out, _ = run(capsys, "stats", processed["store"], "--format", "json")
    assert code == 0
    stats = json.loads(out)
    assert stats["validity_rate"] == 0.85 and stats["episode_count"] == 20
    code, out, _ = run(capsys, "stats", processed["store"], "--format", "table")
    assert "0.85" in out


def test_mix_cli_is_byte_identical(processed, tmp_path, capsys):
    args = ["mix", processed["store"], "--strategy", "pure_robot_free", "--robot-free", 10, "--real", 0,
            "--seed", 4]
    assert run(capsys, *args, "--out", tmp_path / "a.json")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.json")[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    m = MixManifest.load(tmp_path / "a.json")
    assert not {e.episode_id for e in m.entries} & set(processed["defects"])
    code, _, err = run(capsys, *args[:4], "--robot-free", 18, "--real", 0, "--seed", 4)
    assert code == 1 and "InsufficientPool" in err


def test_export_shards_cli(processed, tmp_path, capsys):
    run(capsys, "mix", processed["store"], "--strategy", "pure_robot_free", "--robot-free", 3, "--real", 0,
        "--seed", 1, "--out", tmp_path / "m.json")
    code, out, _ = run(capsys, "export-shards", tmp_path / "m.json", "--store", processed["store"],
                       "--out", tmp_path / "shards", "--shard-size", 2)
    assert code == 0 and len(out.split()) == 2
    recs = [json.loads(ln) for p in sorted((tmp_path / "shards").glob("*.jsonl")) for ln in p.read_text().splitlines()]
    assert len(recs) == 3
    rec = recs[0]
    traj_lines = (processed["store"] / rec["episode_id"] / "trajectory.jsonl").read_text().splitlines()
    assert len(rec["ticks"]) == len(traj_lines)
    assert rec["ticks"][0]["frames"]["ego"].startswith("frames/ego/")
    assert set(rec) >= {"instruction", "chunks", "ticks", "bundle"}


def test_export_playback_cli(processed, tmp_path, capsys):
    code, _, _ = run(capsys, "--config", processed["config"], "export-playback", processed["store"] / "sess_000",
                     "--hz", 50, "--out", tmp_path / "p.csv")
    assert code == 0
    pb = read_playback(tmp_path / "p.csv")
    assert pb.control_hz == 50.0 and pb.rows.shape[1] == 1 + 12 + 2
    code, _, err = run(capsys, "--config", processed["config"], "export-playback", processed["store"] / "sess_005",
                       "--hz", 50, "--out", tmp_path / "q.csv")
    assert code == 1 and "InvalidEpisode" in err


def test_malformed_bundle_does_not_stop_batch(processed, tmp_path, capsys):
    bad = tmp_path / "bad"
    shutil.copytree(processed["bundles"][0], bad)
    lines = (bad / "poses_left.jsonl").read_text().splitlines()
    lines[4] = lines[4].replace('"aperture"', '"apert"')
    (bad / "poses_left.jsonl").write_text("\n".join(lines) + "\n")
    store = tmp_path / "store"
    code, out, _ = run(capsys, "--config", processed["config"], "process", bad, processed["bundles"][1],
                       "--store", store)
    assert code == 1
    assert "poses_left.jsonl:5" in out
    assert [p.name for p in store.iterdir()] == [processed["bundles"][1].name]


def test_usage_errors_exit_2(processed, capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "mix")[0] == 2
    assert run(capsys, "--config", processed["config"], "process", processed["bundles"][0])[0] == 2
    assert run(capsys, "--version")[0] == 0


def test_missing_store_entry_exits_1(tmp_path, capsys):
    code, _, err = run(capsys, "stats", tmp_path / "nope")
    assert code == 1 and "error" in err


def test_flags_override_config_file(processed, monkeypatch):
    monkeypatch.delenv("G0_FORGE_CONFIG", raising=False)
    args = build_parser().parse_args(["--config", str(processed["config"]), "--tick-hz", "15", "stats", "x"])
    config = resolve_config(args)
    assert config.tick_hz == 15.0
    assert config.robot_profile == processed["config"].parent / "robot_profile.json"


def test_config_from_environment(processed, monkeypatch):
    monkeypatch.setenv("G0_FORGE_CONFIG", str(processed["config"]))
    config = resolve_config(build_parser().parse_args(["--workers", "3", "stats", "x"]))
    assert config.workers == 3 and config.quality_profile.name == "quality_profile.json"


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "c.json").write_text('{"tick_hz": 30, "tickhz": 15}')
    with pytest.raises(ValueError, match="tickhz"):
        PipelineConfig.load(tmp_path / "c.json")


def test_make_fixtures_with_catalog(tmp_path, capsys):
    code, out, _ = run(capsys, "make-fixtures", tmp_path, "--catalog-free", 4, "--catalog-real", 2)
    assert code == 0
    assert len(list((tmp_path / "sessions").iterdir())) == 20
    assert len(list_episodes(tmp_path / "catalog")) == 6
