"""TOML campaign configuration: strict parsing and effective-config snapshots.

Layout::

    [campaign]          # env or adapter, budgets, seed, corpus and threshold knobs
    [energy]            # alpha, beta, gamma
    [mutation]          # magnitude, max_retries
    [curiosity]         # hidden_sizes, output_dim, learning_rate, l2_coeff
    [report]            # bins
    [output]            # dir
    [env.<name>]        # constructor arguments of the named built-in environment

Unknown sections and keys are errors. Optional values that are unset
(wall-clock budgets, max_step, adapter) are simply absent from the snapshot.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import tomli
import tomli_w

from .fuzzer import CampaignConfig
from .mutation import MutationConfig
from .scheduling import EnergyParams

HOUR_MS = 3_600_000
FULL_SCALE_FUZZ_MS = 12 * HOUR_MS
# Corpus-initialisation wall clock per environment; the fast simulators get less.
FULL_SCALE_INIT_MS = {"encounter": HOUR_MS, "navi2d": HOUR_MS // 2}
FULL_SCALE_INIT_DEFAULT_MS = 2 * HOUR_MS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    adapter: Optional[str] = None
    out_dir: str = "curefuzz-out"


_CAMPAIGN_KEYS = {
    "env": str,
    "adapter": str,
    "init_episodes": int,
    "init_ms": int,
    "iterations": int,
    "fuzz_ms": int,
    "rng_seed": int,
    "max_step": int,
    "robustness_magnitude": float,
    "max_corpus_size": int,
    "novelty_percentile": float,
    "threshold_refresh": int,
    "ablate_curiosity": bool,
    "crash_space": str,
}
_ENERGY_KEYS = {"alpha": float, "beta": float, "gamma": float}
_MUTATION_KEYS = {"magnitude": (float, list), "max_retries": int}
_CURIOSITY_KEYS = {"hidden_sizes": list, "output_dim": int, "learning_rate": float, "l2_coeff": float}
_REPORT_KEYS = {"bins": list}
_OUTPUT_KEYS = {"dir": str}
_SECTIONS = {
    "campaign": _CAMPAIGN_KEYS,
    "energy": _ENERGY_KEYS,
    "mutation": _MUTATION_KEYS,
    "curiosity": _CURIOSITY_KEYS,
    "report": _REPORT_KEYS,
    "output": _OUTPUT_KEYS,
}


def _check(section: str, table: Dict[str, Any], schema: Dict[str, Any]) -> Dict[str, Any]:
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    out = {}
    for key, value in table.items():
        if key not in schema:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        want = schema[key]
        types = want if isinstance(want, tuple) else (want,)
        ok = any(
            isinstance(value, t) and not (t in (int, float) and isinstance(value, bool)) or (t is float and type(value) is int)
            for t in types
        )
        if not ok:
            names = " or ".join(t.__name__ for t in types)
            raise ConfigError(f"[{section}] {key}: expected {names}, got {type(value).__name__}")
        out[key] = float(value) if float in types and type(value) is int else value
    return out


def parse_config(doc: Dict[str, Any]) -> RunConfig:
    for section in doc:
        if section not in _SECTIONS and section != "env":
            raise ConfigError(f"unknown section [{section}]")
    sec = {name: _check(name, doc.get(name, {}), schema) for name, schema in _SECTIONS.items()}
    camp = dict(sec["campaign"])
    adapter = camp.pop("adapter", None)
    env_name = camp.pop("env", None)
    if env_name is None and adapter is None:
        raise ConfigError("[campaign] env: missing (set env or adapter)")
    env_tables = doc.get("env", {})
    if not isinstance(env_tables, dict):
        raise ConfigError("[env] must hold one table per environment name")
    for name in env_tables:
        if name != env_name:
            raise ConfigError(f"[env.{name}] does not match campaign env {env_name!r}")
    env_params = dict(env_tables.get(env_name, {})) if env_name else {}
    if "max_step" in camp and camp["max_step"] < 1:
        raise ConfigError("[campaign] max_step: must be positive")
    for key in ("init_episodes", "iterations", "init_ms", "fuzz_ms"):
        if key in camp and camp[key] < 0:
            raise ConfigError(f"[campaign] {key}: must be non-negative")
    cur = sec["curiosity"]
    if "hidden_sizes" in cur and not all(isinstance(h, int) and h > 0 for h in cur["hidden_sizes"]):
        raise ConfigError("[curiosity] hidden_sizes: expected a list of positive integers")
    bins = sec["report"].get("bins")
    if bins is not None and not (bins and all(isinstance(b, int) and b > 0 for b in bins)):
        raise ConfigError("[report] bins: expected a non-empty list of positive integers")
    try:
        cfg = CampaignConfig(
            env=env_name or "remote",
            env_params=env_params,
            energy=EnergyParams(**sec["energy"]),
            mutation=MutationConfig(**sec["mutation"]),
            **camp,
            **cur,
            **({"bins": tuple(bins)} if bins else {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(cfg, adapter, sec["output"].get("dir", "curefuzz-out"))


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def to_document(run: RunConfig) -> Dict[str, Any]:
    """Effective configuration with every default spelled out."""
    c = run.campaign
    campaign = {
        "env": c.env,
        "init_episodes": c.init_episodes,
        "iterations": c.iterations,
        "rng_seed": c.rng_seed,
        "robustness_magnitude": c.robustness_magnitude,
        "max_corpus_size": c.max_corpus_size,
        "novelty_percentile": float(c.novelty_percentile),
        "threshold_refresh": c.threshold_refresh,
        "ablate_curiosity": c.ablate_curiosity,
        "crash_space": c.crash_space,
    }
    for key in ("init_ms", "fuzz_ms", "max_step"):
        if getattr(c, key) is not None:
            campaign[key] = getattr(c, key)
    if run.adapter:
        campaign["adapter"] = run.adapter
    mag = c.mutation.magnitude
    doc = {
        "campaign": campaign,
        "energy": dataclasses.asdict(c.energy),
        "mutation": {
            "magnitude": [float(m) for m in mag] if isinstance(mag, (list, tuple)) else float(mag),
            "max_retries": c.mutation.max_retries,
        },
        "curiosity": {
            "hidden_sizes": list(c.hidden_sizes),
            "output_dim": c.output_dim,
            "learning_rate": c.learning_rate,
            "l2_coeff": c.l2_coeff,
        },
        "report": {"bins": list(c.bins)},
        "output": {"dir": run.out_dir},
    }
    if c.env_params:
        doc["env"] = {c.env: dict(c.env_params)}
    return doc


def dumps(run: RunConfig) -> str:
    return tomli_w.dumps(to_document(run))


def apply_full_scale(cfg: CampaignConfig) -> CampaignConfig:
    """Wall-clock budgets: a long random init, then twelve hours of fuzzing."""
    return dataclasses.replace(cfg, init_ms=FULL_SCALE_INIT_MS.get(cfg.env, FULL_SCALE_INIT_DEFAULT_MS), fuzz_ms=FULL_SCALE_FUZZ_MS)


def resolve_out_dir(cli_value: Optional[str], run: RunConfig) -> Path:
    """``CUREFUZZ_OUT`` overrides everything, then ``--out``, then the config file."""
    env = os.environ.get("CUREFUZZ_OUT")
    return Path(env or cli_value or run.out_dir)
