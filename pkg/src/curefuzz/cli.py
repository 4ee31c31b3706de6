"""Command-line entry point: ``curefuzz {fuzz,ablate,replay,report}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .artifacts import MissingArtifact, build_report, read_crashes, report_csv, report_text, write_campaign
from .config import ConfigError, RunConfig, apply_full_scale, load_config, resolve_out_dir
from .envs import ENVIRONMENTS, make_env
from .fuzzer import BudgetTooSmall, CampaignError, CampaignResult, ReplayMismatch, distinct_crash_counts, fuzz, replay
from .io import atomic_write_text
from .mdp import AgentFailure

log = logging.getLogger("curefuzz")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
CHECKPOINTS = 12  # comparison rows per ablation, one per "hour" of a twelve-hour campaign


def _bins(text: str) -> Tuple[int, ...]:
    try:
        bins = tuple(int(b) for b in text.split(",") if b.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not bins or any(b < 1 for b in bins):
        raise argparse.ArgumentTypeError("bins must be positive integers")
    return bins


def _campaign_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML campaign configuration")
    p.add_argument("--env", help="built-in environment name")
    p.add_argument("--adapter", metavar="ADDR", help="host:port or a command speaking the adapter protocol")
    p.add_argument("--iterations", type=int)
    p.add_argument("--init-episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (the CUREFUZZ_OUT environment variable overrides it)")
    p.add_argument("--bins", type=_bins, help="report bin settings, e.g. 5,10,100")
    p.add_argument("--full-scale", action="store_true", help="wall-clock budgets: long random init, 12 h fuzzing")
    p.add_argument("--ablate-curiosity", action="store_true", help="pin the intrinsic reward to zero")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curefuzz", description="Curiosity-driven fuzzing of sequential decision-makers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _campaign_flags(sub.add_parser("fuzz", help="run one campaign"))
    _campaign_flags(sub.add_parser("ablate", help="run full and curiosity-ablated campaigns with paired seeds"))
    rp = sub.add_parser("replay", help="re-execute recorded crashes and check their trajectory hashes")
    rp.add_argument("crash_file", type=Path)
    rp.add_argument("--index", type=int, default=0)
    rp.add_argument("--all", action="store_true")
    rp.add_argument("--config", type=Path, help="defaults to config.toml next to the crash file")
    rep = sub.add_parser("report", help="coverage / distinct-crash tables from an output directory")
    rep.add_argument("out_dir", type=Path)
    return ap


def effective_config(args) -> RunConfig:
    run = load_config(args.config) if args.config else None
    if run is None:
        if not (args.env or args.adapter):
            raise ConfigError("no environment: pass --env, --adapter or --config")
        run = RunConfig()
    cfg = run.campaign
    changes = {}
    if args.env:
        if args.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {args.env!r} (known: {', '.join(sorted(ENVIRONMENTS))})")
        if args.env != cfg.env:
            changes.update(env=args.env, env_params={})
    elif args.adapter and not args.config:
        changes["env"] = "remote"
    if args.iterations is not None:
        changes["iterations"] = args.iterations
    if args.init_episodes is not None:
        changes["init_episodes"] = args.init_episodes
    if args.seed is not None:
        changes["rng_seed"] = args.seed
    if args.bins:
        changes["bins"] = args.bins
    if args.ablate_curiosity:
        changes["ablate_curiosity"] = True
    try:
        cfg = dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.full_scale:
        cfg = apply_full_scale(cfg)
    adapter = args.adapter or run.adapter
    out = resolve_out_dir(args.out, run)
    return RunConfig(cfg, adapter, str(out))


def open_env(run: RunConfig):
    """Returns ``(env, agent, close)``."""
    if run.adapter:
        from .adapter import RemoteEnvironment

        env = RemoteEnvironment.connect(run.adapter)
        return env, None, env.close
    env = make_env(run.campaign.env, **run.campaign.env_params)
    return env, env.make_agent(), lambda: None


def _run(run: RunConfig) -> CampaignResult:
    env, agent, close = open_env(run)
    try:
        return fuzz(env, agent, run.campaign)
    finally:
        close()


def _print_summary(result: CampaignResult, out: Path) -> None:
    st = result.stats
    distinct = ", ".join(f"{b} bins: {n}" for b, n in st.distinct_crash_cells.items())
    print(f"{result.config.env}: {st.crashes_found} crashes ({distinct}) in {st.iterations} iterations")
    print(f"mean analysis time {st.mean_analysis_ms:.3f} ms/iteration; artifacts in {out}")


def cmd_fuzz(args) -> int:
    run = effective_config(args)
    result = _run(run)
    out = Path(run.out_dir)
    write_campaign(result, run, out)
    _print_summary(result, out)
    return EXIT_OK


def comparison_csv(full: CampaignResult, ablated: CampaignResult, env, checkpoints: int = CHECKPOINTS) -> str:
    total = max(full.stats.iterations, ablated.stats.iterations)
    bins = full.config.bins
    grid = sorted({max(1, round(total * k / checkpoints)) for k in range(1, checkpoints + 1)}) if total else [0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["iteration"]
        + [f"{v}_crashes" for v in ("full", "ablated")]
        + [f"{v}_distinct_{b}" for v in ("full", "ablated") for b in bins]
    )
    for it in grid:
        row = [it]
        parts = []
        for res in (full, ablated):
            found = [c for c in res.crashes if c.phase == "init" or c.found_at_iter < it]
            row.append(len(found))
            parts.append(distinct_crash_counts(found, env, bins, res.config.crash_space))
        for d in parts:
            row.extend(d[b] for b in bins)
        w.writerow(row)
    return buf.getvalue()


def cmd_ablate(args) -> int:
    run = effective_config(args)
    base = Path(run.out_dir)
    runs = {}
    for name, ablate in (("full", False), ("ablated", True)):
        sub = RunConfig(dataclasses.replace(run.campaign, ablate_curiosity=ablate), run.adapter, str(base / name))
        runs[name] = _run(sub)
        write_campaign(runs[name], sub, base / name)
        _print_summary(runs[name], base / name)
    env, _, close = open_env(run)
    try:
        atomic_write_text(base / "comparison.csv", comparison_csv(runs["full"], runs["ablated"], env))
    finally:
        close()
    print(f"comparison written to {base / 'comparison.csv'}")
    return EXIT_OK


def cmd_replay(args) -> int:
    config_path = args.config or args.crash_file.parent / "config.toml"
    run = load_config(config_path)
    records = read_crashes(args.crash_file)
    if not records:
        print("no crash records")
        return EXIT_OK
    chosen = records if args.all else [records[args.index]]
    env, agent, close = open_env(run)
    failures = 0
    try:
        for rec in chosen:
            try:
                traj = replay(rec, env, agent, run.campaign.max_step)
            except (ReplayMismatch, AgentFailure) as exc:
                failures += 1
                print(f"crash {rec.id}: MISMATCH ({exc})")
                continue
            print(
                f"crash {rec.id}: ok, {traj.steps} states, reward {traj.cumulative_reward:.6g}, hash {rec.trajectory_hash}"
            )
    finally:
        close()
    print(f"{len(chosen) - failures}/{len(chosen)} replays matched")
    return EXIT_OK if failures == 0 else EXIT_FAILURE


def cmd_report(args) -> int:
    out: Path = args.out_dir
    run = load_config(out / "config.toml")
    cfg = run.campaign
    env = make_env(cfg.env, **cfg.env_params) if cfg.env in ENVIRONMENTS else None
    if env is None:
        from .adapter import RemoteEnvironment

        env = RemoteEnvironment.connect(run.adapter)
    table = build_report(out, env, cfg.bins, cfg.crash_space)
    atomic_write_text(out / "report.csv", report_csv(table))
    text = report_text(table, f"{cfg.env} ({'ablated' if cfg.ablate_curiosity else 'full'})")
    atomic_write_text(out / "report.txt", text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"fuzz": cmd_fuzz, "ablate": cmd_ablate, "replay": cmd_replay, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CampaignError, BudgetTooSmall, MissingArtifact, AgentFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
