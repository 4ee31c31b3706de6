"""Campaign output directory: writing artifacts and building reports from them.

Files written by :func:`write_campaign`::

    config.toml         effective configuration (enough to rerun bit-exactly)
    crashes.jsonl       one crash record per line, keys sorted
    corpus.json         versioned corpus snapshot (Corpus.from_dict reloads it)
    curiosity.json      curiosity checkpoint (absent for ablated runs)
    stats.csv           iteration, crashes, corpus_size, analysis_ms, intrinsic
    summary.json        counters, distinct-crash cells, coverage
    visited_cells.npz   visited coverage cells per bin setting

Every file is replaced atomically.
"""
from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from . import curiosity as cur
from .config import RunConfig, dumps
from .coverage import BinGrid, format_fraction
from .fuzzer import CampaignResult, CrashRecord, distinct_crash_counts
from .io import atomic_write_bytes, atomic_write_text
from .mdp import Environment

STATS_HEADER = ("iteration", "crashes", "corpus_size", "analysis_ms", "intrinsic")


class MissingArtifact(FileNotFoundError):
    pass


def crashes_jsonl(crashes: Sequence[CrashRecord]) -> str:
    return "".join(json.dumps(c.to_dict(), sort_keys=True) + "\n" for c in crashes)


def read_crashes(path: Path) -> List[CrashRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(CrashRecord.from_dict(json.loads(line)))
    return out


def stats_csv(result: CampaignResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_HEADER)
    w.writerows(result.stats.rows())
    return buf.getvalue()


def summary_dict(result: CampaignResult) -> dict:
    st = result.stats
    cov = result.coverage
    d = {
        "env": result.config.env,
        "ablated": result.config.ablate_curiosity,
        "iterations": st.iterations,
        "init_episodes": st.init_episodes,
        "episodes_run": st.episodes_run,
        "crashes": st.crashes_found,
        "init_crashes": st.init_crashes,
        "admitted": st.admitted,
        "corpus_size": len(result.corpus),
        "skipped_mutations": st.skipped_mutations,
        "agent_failures": st.agent_failures,
        "novelty_threshold": st.novelty_threshold,
        "mean_analysis_ms": st.mean_analysis_ms,
        "distinct_crash_cells": {str(b): n for b, n in st.distinct_crash_cells.items()},
        "coverage_kind": cov.kind,
        "coverage": st.coverage,
        "visited_cells": {str(b): len(c) for b, c in cov.cells.items()},
    }
    if cov.kind == "ground_types":
        d["ground_types"] = sorted(cov.ground_types)
        d["alphabet_size"] = cov.env.alphabet_size
    return d


def write_campaign(result: CampaignResult, run: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "config.toml", dumps(run))
    atomic_write_text(out_dir / "crashes.jsonl", crashes_jsonl(result.crashes))
    atomic_write_text(out_dir / "corpus.json", json.dumps(result.corpus.to_dict(), sort_keys=True))
    if result.curiosity is not None:
        cur.save_checkpoint(result.curiosity, out_dir / "curiosity.json")
    atomic_write_text(out_dir / "stats.csv", stats_csv(result))
    atomic_write_text(out_dir / "summary.json", json.dumps(summary_dict(result), indent=2, sort_keys=True) + "\n")
    buf = io.BytesIO()
    np.savez_compressed(buf, **{f"bins_{k}": v for k, v in result.coverage.cell_arrays().items()})
    atomic_write_bytes(out_dir / "visited_cells.npz", buf.getvalue())


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing campaign artifact: {path}")
    return path


def build_report(out_dir: Path, env: Environment, bins: Sequence[int], crash_space: str = "seed") -> Dict[str, Dict[str, str]]:
    """Table of metric -> {bin column -> value}, recomputed from the raw artifacts."""
    crashes = read_crashes(_require(out_dir / "crashes.jsonl"))
    summary = json.loads(_require(out_dir / "summary.json").read_text())
    distinct = distinct_crash_counts(crashes, env, bins, crash_space)
    table: Dict[str, Dict[str, str]] = {"crashes": {}, "distinct_crashes": {}, "state_coverage": {}}
    if summary.get("coverage_kind") == "ground_types":
        # A single column: there are no bins over a discrete alphabet.
        col = str(bins[0])
        table["crashes"][col] = str(len(crashes))
        table["distinct_crashes"][col] = str(distinct[bins[0]])
        seen = len(summary.get("ground_types", []))
        table["state_coverage"][col] = format_fraction(Fraction(seen, summary["alphabet_size"])) if seen else "0"
        return table
    with np.load(_require(out_dir / "visited_cells.npz")) as cells:
        for b in bins:
            col = str(b)
            table["crashes"][col] = str(len(crashes))
            table["distinct_crashes"][col] = str(distinct[b])
            key = f"bins_{b}"
            n = len(cells[key]) if key in cells.files else 0
            grid = BinGrid(b, env.spec.obs_lower, env.spec.obs_upper)
            table["state_coverage"][col] = format_fraction(Fraction(n, grid.n_cells))
    return table


def report_csv(table: Dict[str, Dict[str, str]]) -> str:
    cols = list(next(iter(table.values())).keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", *cols])
    for metric, row in table.items():
        w.writerow([metric, *(row[c] for c in cols)])
    return buf.getvalue()


def report_text(table: Dict[str, Dict[str, str]], title: str) -> str:
    cols = list(next(iter(table.values())).keys())
    width = max(len(m) for m in table) + 2
    lines = [title, "bins".ljust(width) + "".join(c.rjust(14) for c in cols)]
    for metric, row in table.items():
        lines.append(metric.ljust(width) + "".join(row[c].rjust(14) for c in cols))
    return "\n".join(lines) + "\n"
