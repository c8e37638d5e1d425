"""Command-line front end.

Exit codes: 0 success, 1 hard error (including any failed session in a
batch), 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .assembly import MixManifest, build_mix_manifest, export_playback, export_training_shards
from .episodes import compute_stats
from .errors import G0Error
from .ingest import parse_session, validate_session
from .pipeline import (
    PipelineConfig,
    StageContext,
    dump_json,
    list_episodes,
    load_episode,
    load_trajectory,
    process_batch,
)

logger = logging.getLogger("g0forge")
CONFIG_ENV = "G0_FORGE_CONFIG"


class UsageError(Exception):
    pass


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        out = {"level": record.levelname, "logger": record.name, "msg": record.getMessage()}
        event = getattr(record, "event", None)
        if event is not None:
            out["event"] = event
        if record.exc_info:
            out["exc"] = self.formatException(record.exc_info)
        return json.dumps(out, sort_keys=True, default=str)


def setup_logging(level: str) -> None:
    lvl = getattr(logging, level.upper(), None)
    if not isinstance(lvl, int):
        raise UsageError(f"unknown log level {level!r}")
    handler = logging.StreamHandler(sys.stderr)
    if lvl <= logging.DEBUG:
        handler.setFormatter(JsonLineFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger("g0forge")
    root.handlers[:] = [handler]
    root.setLevel(lvl)
    root.propagate = False


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="g0forge", description="Validate and retarget wearable-capture demonstrations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help=f"pipeline config JSON (default: ${CONFIG_ENV})")
    p.add_argument("--robot-profile")
    p.add_argument("--quality-profile")
    p.add_argument("--tick-hz", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--log-level")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse and validate session bundles")
    s.add_argument("bundles", nargs="+")
    s.add_argument("--out", help="directory for <session>.ingest.json (default: stdout)")

    s = sub.add_parser("process", help="run the full pipeline and write episode store entries")
    s.add_argument("sessions", nargs="*")
    s.add_argument("--store")

    s = sub.add_parser("stats", help="corpus statistics of an episode store")
    s.add_argument("store")
    s.add_argument("--format", choices=("both", "json", "table"), default="both")
    s.add_argument("--block-gap", type=float, default=600.0, help="seconds that split operator blocks")

    s = sub.add_parser("mix", help="build a data-mixing manifest from the valid episodes of a store")
    s.add_argument("store")
    s.add_argument("--strategy", required=True,
                   choices=("pure_real", "pure_robot_free", "augmentation", "substitution"))
    s.add_argument("--robot-free", type=int, default=0)
    s.add_argument("--real", type=int, default=0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--name")
    s.add_argument("--phase", choices=("pretrain", "finetune"))
    s.add_argument("--out", help="manifest path (default: stdout)")

    s = sub.add_parser("export-playback", help="write an open-loop playback CSV for one valid episode")
    s.add_argument("episode", help="episode directory in a store")
    s.add_argument("--hz", type=float, required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("export-shards", help="write training shards for a manifest")
    s.add_argument("manifest")
    s.add_argument("--store", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--shard-size", type=int, default=100)

    s = sub.add_parser("make-fixtures", help="generate the synthetic session corpus and profiles")
    s.add_argument("root")
    s.add_argument("--catalog-free", type=int, default=0, help="stub robot-free episodes for mixing")
    s.add_argument("--catalog-real", type=int, default=0, help="stub real-robot episodes for mixing")
    return p


def resolve_config(args) -> PipelineConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    config = PipelineConfig.load(path) if path else PipelineConfig()
    if args.robot_profile:
        config.robot_profile = Path(args.robot_profile)
    if args.quality_profile:
        config.quality_profile = Path(args.quality_profile)
    if args.tick_hz is not None:
        config.tick_hz = args.tick_hz
    if args.workers is not None:
        config.workers = args.workers
    if args.log_level:
        config.log_level = args.log_level
    if getattr(args, "store", None) and args.command == "process":
        config.store = Path(args.store)
    return config


def write_or_print(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_ingest(args, config) -> int:
    failed = 0
    for bundle in args.bundles:
        try:
            report = validate_session(parse_session(bundle))
        except (G0Error, OSError, ValueError) as exc:
            failed += 1
            logger.error("%s: %s", bundle, exc)
            continue
        text = dump_json(report.to_json())
        if args.out:
            write_or_print(text, Path(args.out) / f"{report.session_id}.ingest.json")
        else:
            sys.stdout.write(text)
        for w in report.warnings:
            logger.warning("%s: %s", report.session_id, w)
    return 1 if failed else 0


def cmd_process(args, config) -> int:
    sessions = [Path(s) for s in args.sessions] or list(config.inputs)
    if not sessions:
        raise UsageError("process needs at least one session bundle (arguments or config 'inputs')")
    if config.store is None:
        raise UsageError("process needs --store or a config 'store'")
    expanded = []
    for s in sessions:
        # a directory of bundles stands for all of them
        if s.is_dir() and not (s / "meta.json").exists():
            expanded += sorted(d for d in s.iterdir() if d.is_dir())
        else:
            expanded.append(s)
    config.check()
    summary = process_batch(expanded, config, config.store)
    valid = sum(v == "valid" for _, v in summary.processed)
    print(f"processed {len(summary.processed)} sessions ({valid} valid), {len(summary.failures)} failed")
    for bundle, error in summary.failures:
        print(f"FAILED {bundle}: {error}")
    return 0 if summary.ok else 1


def cmd_stats(args, config) -> int:
    stats = compute_stats(list_episodes(args.store), args.block_gap)
    if args.format in ("both", "json"):
        sys.stdout.write(json.dumps(stats.to_json(), indent=2, sort_keys=True) + "\n")
    if args.format in ("both", "table"):
        print(stats.table())
    return 0


def cmd_mix(args, config) -> int:
    pools: dict[str, list[str]] = {}
    for ep in list_episodes(args.store):
        if ep.valid:
            pools.setdefault(ep.source, []).append(ep.episode_id)
    manifest = build_mix_manifest(pools, args.strategy, {"robot_free": args.robot_free, "real_robot": args.real},
                                  args.seed, args.name, args.phase)
    write_or_print(manifest.dumps(), args.out)
    logger.info("manifest %s: %s ratio %s, %d episodes", manifest.name, manifest.strategy,
                manifest.ratio, manifest.total)
    return 0


def cmd_export_playback(args, config) -> int:
    config.check()
    ctx = StageContext.from_config(config)
    episode = load_episode(args.episode)
    traj = load_trajectory(args.episode)
    pb = export_playback(episode, traj, args.hz, ctx.model, ctx.profile.home_config)
    pb.write(args.out)
    logger.info("%s: %d rows, max TCP deviation %.3f mm", episode.episode_id, len(pb.rows), pb.max_deviation * 1000)
    return 0


def cmd_export_shards(args, config) -> int:
    manifest = MixManifest.load(args.manifest)
    paths = export_training_shards(manifest, args.store, args.out, args.shard_size)
    for p in paths:
        print(p)
    return 0


def cmd_make_fixtures(args, config) -> int:
    from .synthetic.catalog import write_catalog
    from .synthetic.sessions import make_corpus

    info = make_corpus(args.root)
    print(f"wrote {len(info['bundles'])} sessions under {Path(args.root) / 'sessions'}")
    print(f"config: {info['config']}")
    if args.catalog_free or args.catalog_real:
        store = write_catalog(Path(args.root) / "catalog", args.catalog_free, args.catalog_real)
        print(f"catalog: {store}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "process": cmd_process,
    "stats": cmd_stats,
    "mix": cmd_mix,
    "export-playback": cmd_export_playback,
    "export-shards": cmd_export_shards,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        config = resolve_config(args)
        setup_logging(config.log_level)
        return COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"g0forge: usage error: {exc}", file=sys.stderr)
        return 2
    except (G0Error, OSError, ValueError, KeyError) as exc:
        print(f"g0forge: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
