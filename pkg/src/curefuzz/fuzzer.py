"""Campaign driver: corpus initialisation and the select/mutate/run/score/admit loop."""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import curiosity as cur
from .coverage import DEFAULT_BINS, BinGrid, CoverageTracker, distinct_crashes
from .mdp import (
    AgentFailure,
    Environment,
    IllegalInitialState,
    InitialCrash,
    Trajectory,
    run_episode,
)
from .mutation import MutationConfig, MutationExhausted, mutate
from .scheduling import Corpus, CorpusEntry, EnergyParams, is_interesting, robustness, select_seed

log = logging.getLogger(__name__)

PHASE_INIT = 0
PHASE_FUZZ = 1
PHASE_CURIOSITY = 2
# Distinct crashes are binned over crash seeds by default, or over the states the crashes ended in.
CRASH_SPACES = ("seed", "terminal")


class BudgetTooSmall(Exception):
    pass


class ReplayMismatch(Exception):
    pass


class CampaignError(Exception):
    """An environment or agent failure, with the seed that triggered it."""

    def __init__(self, message: str, seed: np.ndarray):
        super().__init__(message)
        self.seed = seed


@dataclass
class CampaignConfig:
    env: str = "navi2d"
    env_params: Dict[str, Any] = field(default_factory=dict)
    init_episodes: int = 500
    init_ms: Optional[int] = None
    iterations: int = 5000
    fuzz_ms: Optional[int] = None
    rng_seed: int = 0
    max_step: Optional[int] = None
    energy: EnergyParams = field(default_factory=EnergyParams)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    robustness_magnitude: float = 0.01
    hidden_sizes: Tuple[int, ...] = (64, 64)
    output_dim: int = 32
    learning_rate: float = 1e-3
    l2_coeff: float = 1e-5
    max_corpus_size: int = 2000
    novelty_percentile: float = 75.0
    threshold_refresh: int = 500
    ablate_curiosity: bool = False
    bins: Tuple[int, ...] = DEFAULT_BINS
    crash_space: str = "seed"

    def __post_init__(self):
        if self.crash_space not in CRASH_SPACES:
            raise ValueError(f"crash_space must be one of {CRASH_SPACES}")
        if self.init_ms is None and self.init_episodes < 0:
            raise ValueError("init_episodes must be non-negative")
        if self.fuzz_ms is None and self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.max_corpus_size < 1:
            raise ValueError("max_corpus_size must be positive")
        if not 0 <= self.robustness_magnitude <= 1:
            raise ValueError("robustness_magnitude must lie in [0, 1]")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.bins = tuple(int(b) for b in self.bins)


@dataclass
class CrashRecord:
    id: int
    seed: List[float]
    trajectory_hash: str
    cumulative_reward: float
    found_at_iter: int
    phase: str
    parent_id: Optional[int]
    episode_seed: int
    steps: int
    final_state: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CrashRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    @property
    def seed_array(self) -> np.ndarray:
        return np.asarray(self.seed, dtype=np.float64)


def format_hash(h: int) -> str:
    return f"{h:016x}"


@dataclass
class CampaignStats:
    iterations: int = 0
    init_episodes: int = 0
    episodes_run: int = 0
    crashes_found: int = 0
    init_crashes: int = 0
    skipped_mutations: int = 0
    agent_failures: int = 0
    admitted: int = 0
    novelty_threshold: float = 0.0
    crash_series: List[int] = field(default_factory=list)
    corpus_series: List[int] = field(default_factory=list)
    analysis_ms: List[float] = field(default_factory=list)
    exec_ms: List[float] = field(default_factory=list)
    intrinsic_series: List[float] = field(default_factory=list)
    distinct_crash_cells: Dict[int, int] = field(default_factory=dict)
    coverage: Dict[str, str] = field(default_factory=dict)

    @property
    def mean_analysis_ms(self) -> float:
        return float(np.mean(self.analysis_ms)) if self.analysis_ms else 0.0

    def rows(self):
        """Per-iteration rows for the stats CSV."""
        for k in range(len(self.crash_series)):
            yield (
                k + 1,
                self.crash_series[k],
                self.corpus_series[k],
                round(self.analysis_ms[k], 4),
                self.intrinsic_series[k],
            )


@dataclass
class CampaignResult:
    crashes: List[CrashRecord]
    stats: CampaignStats
    corpus: Corpus
    curiosity: Optional[cur.CuriosityModule]
    coverage: CoverageTracker
    config: CampaignConfig


def stream_rng(seed: int, phase: int, index: int) -> np.random.Generator:
    """Independent generator per (campaign seed, phase, index)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, phase, index])


def crash_grid(env: Environment, bins: int) -> BinGrid:
    """Crash seeds are binned over the legal initial-state box they were drawn from."""
    ls = env.spec.legal_space
    return BinGrid(bins, ls.lower, ls.upper)


def distinct_crash_counts(crashes, env: Environment, bins: Sequence[int], space: str = "seed") -> Dict[int, int]:
    if space == "terminal":
        points = [np.asarray(c.final_state) for c in crashes]
        spec = env.spec
        return {b: distinct_crashes(points, BinGrid(b, spec.obs_lower, spec.obs_upper)) for b in bins}
    points = [c.seed_array for c in crashes]
    return {b: distinct_crashes(points, crash_grid(env, b)) for b in bins}


class Campaign:
    def __init__(self, env: Environment, agent, cfg: CampaignConfig):
        self.env = env
        self.agent = agent
        self.cfg = cfg
        self.max_step = cfg.max_step or env.spec.max_step
        self.ablated = cfg.ablate_curiosity
        self.corpus = Corpus(cfg.energy, cfg.max_corpus_size)
        self.crashes: List[CrashRecord] = []
        self.stats = CampaignStats()
        self.coverage = CoverageTracker(env, cfg.bins)
        self.curiosity: Optional[cur.CuriosityModule] = None
        if not self.ablated:
            spec = env.spec
            self.curiosity = cur.init_curiosity(
                spec.state_dim,
                cfg.hidden_sizes,
                cfg.output_dim,
                rng_seed=int(stream_rng(cfg.rng_seed, PHASE_CURIOSITY, 0).integers(2**63)),
                learning_rate=cfg.learning_rate,
                l2_coeff=cfg.l2_coeff,
                input_lower=spec.obs_lower,
                input_upper=spec.obs_upper,
            )
        self.threshold = 0.0
        self._window: deque = deque(maxlen=max(1, cfg.threshold_refresh))

    # -- pieces -----------------------------------------------------------

    def _episode(self, seed: np.ndarray, episode_seed: int) -> Trajectory:
        out = run_episode(self.env, self.agent, seed, self.max_step, episode_seed)
        self.stats.episodes_run += 1
        return out.trajectory

    def _score(self, traj: Trajectory) -> float:
        if self.curiosity is None:
            return 0.0
        return cur.score_and_update(self.curiosity, traj).value

    def _robustness(self, seed, traj, rng, episode_seed) -> float:
        r = robustness(
            seed, traj, self.env, self.agent, self.cfg.robustness_magnitude, rng, episode_seed, self.max_step
        )
        self.stats.episodes_run += 1
        return r

    def _record_crash(self, seed, traj, iteration, phase, parent_id, episode_seed) -> None:
        rec = CrashRecord(
            id=len(self.crashes),
            seed=[float(v) for v in seed],
            trajectory_hash=format_hash(traj.digest()),
            cumulative_reward=float(traj.cumulative_reward),
            found_at_iter=iteration,
            phase=phase,
            parent_id=parent_id,
            episode_seed=int(episode_seed),
            steps=traj.steps,
            final_state=[float(v) for v in traj.final],
        )
        self.crashes.append(rec)

    def _refresh_threshold(self) -> None:
        if self._window:
            self.threshold = float(np.percentile(np.fromiter(self._window, float), self.cfg.novelty_percentile))
        self.stats.novelty_threshold = self.threshold

    # -- phases -----------------------------------------------------------

    def init_corpus(self) -> Corpus:
        cfg = self.cfg
        deadline = None if cfg.init_ms is None else time.perf_counter() + cfg.init_ms / 1000.0
        k = 0
        while (k < cfg.init_episodes) if deadline is None else (time.perf_counter() < deadline):
            rng = stream_rng(cfg.rng_seed, PHASE_INIT, k)
            episode_seed = int(rng.integers(2**63))
            seed = self.env.sample_initial(rng)
            try:
                traj = self._episode(seed, episode_seed)
            except (IllegalInitialState, InitialCrash):
                k += 1
                continue
            except AgentFailure as exc:
                self._failure(exc, seed, f"init episode {k}")
                k += 1
                continue
            self.coverage.observe(traj.states)
            intrinsic = self._score(traj)
            self._window.append(intrinsic)
            if traj.crashed:
                self._record_crash(seed, traj, k, "init", None, episode_seed)
                self.stats.init_crashes += 1
            try:
                rob = self._robustness(seed, traj, rng, episode_seed)
            except AgentFailure as exc:
                self._failure(exc, seed, f"init episode {k}")
                k += 1
                continue
            self.corpus.insert(
                CorpusEntry(seed, traj.cumulative_reward, intrinsic, rob, born_at_iter=0, episode_seed=episode_seed)
            )
            k += 1
        self.stats.init_episodes = k
        if len(self.corpus) == 0:
            raise BudgetTooSmall("initialisation admitted no seeds")
        self._refresh_threshold()
        self.stats.crashes_found = len(self.crashes)
        return self.corpus

    def _iteration(self, it: int) -> Tuple[float, float]:
        """One select/mutate/run/score/admit step. Returns (intrinsic reward, seconds spent executing)."""
        cfg, st = self.cfg, self.stats
        rng = stream_rng(cfg.rng_seed, PHASE_FUZZ, it)
        episode_seed = int(rng.integers(2**63))
        parent_id = select_seed(self.corpus, rng)
        parent = self.corpus[parent_id]
        try:
            mutant = mutate(parent.seed, cfg.mutation, self.env, rng)
        except MutationExhausted:
            st.skipped_mutations += 1
            return 0.0, 0.0
        t0 = time.perf_counter()
        try:
            traj = self._episode(mutant, episode_seed)
        except (IllegalInitialState, InitialCrash, AgentFailure) as exc:
            self._failure(exc, mutant, f"iteration {it}")
            return 0.0, time.perf_counter() - t0
        exec_s = time.perf_counter() - t0
        self.coverage.observe(traj.states)
        intrinsic = self._score(traj)
        self._window.append(intrinsic)
        if traj.crashed:
            self._record_crash(mutant, traj, it, "fuzz", parent_id, episode_seed)
            return intrinsic, exec_s
        if mutant in self.corpus or not is_interesting(
            intrinsic, traj.cumulative_reward, parent.cumulative_reward, self.threshold
        ):
            return intrinsic, exec_s
        t0 = time.perf_counter()
        try:
            rob = self._robustness(mutant, traj, rng, episode_seed)
        except AgentFailure as exc:
            self._failure(exc, mutant, f"iteration {it}")
            return intrinsic, exec_s + time.perf_counter() - t0
        exec_s += time.perf_counter() - t0
        entry = CorpusEntry(
            mutant,
            traj.cumulative_reward,
            intrinsic,
            rob,
            parent_id=parent_id,
            born_at_iter=it + 1,
            episode_seed=episode_seed,
        )
        if self.corpus.insert(entry) is not None:
            st.admitted += 1
        return intrinsic, exec_s

    def _failure(self, exc: Exception, seed: np.ndarray, where: str) -> None:
        """Local failures abort the campaign; a misbehaving remote only costs the current step."""
        if not getattr(self.env, "is_remote", False):
            raise CampaignError(str(exc), seed) from exc
        log.warning("%s skipped: %s", where, exc)
        self.stats.agent_failures += 1

    def fuzz_loop(self) -> None:
        cfg = self.cfg
        deadline = None if cfg.fuzz_ms is None else time.perf_counter() + cfg.fuzz_ms / 1000.0
        it = 0
        st = self.stats
        while (it < cfg.iterations) if deadline is None else (time.perf_counter() < deadline):
            t_start = time.perf_counter()
            intrinsic, exec_s = self._iteration(it)
            it += 1
            if cfg.threshold_refresh > 0 and it % cfg.threshold_refresh == 0:
                self._refresh_threshold()
            st.crash_series.append(len(self.crashes))
            st.corpus_series.append(len(self.corpus))
            st.intrinsic_series.append(intrinsic)
            st.exec_ms.append(exec_s * 1000.0)
            st.analysis_ms.append((time.perf_counter() - t_start - exec_s) * 1000.0)
        st.iterations = it
        st.crashes_found = len(self.crashes)

    def finish(self) -> CampaignResult:
        self.stats.distinct_crash_cells = distinct_crash_counts(self.crashes, self.env, self.cfg.bins, self.cfg.crash_space)
        self.stats.coverage = self.coverage.summary()
        return CampaignResult(self.crashes, self.stats, self.corpus, self.curiosity, self.coverage, self.cfg)

    def run(self) -> CampaignResult:
        self.init_corpus()
        self.fuzz_loop()
        return self.finish()


def init_corpus(env: Environment, agent, cfg: CampaignConfig) -> Corpus:
    return Campaign(env, agent, cfg).init_corpus()


def fuzz(env: Environment, agent, cfg: CampaignConfig) -> CampaignResult:
    return Campaign(env, agent, cfg).run()


def fuzz_ablated(env: Environment, agent, cfg: CampaignConfig) -> CampaignResult:
    """Same loop with the intrinsic reward pinned to zero."""
    return Campaign(env, agent, replace(cfg, ablate_curiosity=True)).run()


def random_search(env: Environment, agent, cfg: CampaignConfig, episodes: int) -> List[CrashRecord]:
    """Baseline: ``episodes`` independent uniform legal seeds, no feedback."""
    camp = Campaign(env, agent, cfg)
    for k in range(episodes):
        rng = stream_rng(cfg.rng_seed, PHASE_INIT, k)
        episode_seed = int(rng.integers(2**63))
        seed = env.sample_initial(rng)
        traj = camp._episode(seed, episode_seed)
        camp.coverage.observe(traj.states)
        if traj.crashed:
            camp._record_crash(seed, traj, k, "random", None, episode_seed)
    return camp.crashes


def replay(record: CrashRecord, env: Environment, agent, max_step: Optional[int] = None) -> Trajectory:
    out = run_episode(env, agent, record.seed_array, max_step, record.episode_seed)
    traj = out.trajectory
    got = format_hash(traj.digest())
    if got != record.trajectory_hash or not traj.crashed:
        raise ReplayMismatch(f"crash {record.id}: expected hash {record.trajectory_hash}, got {got}")
    return traj
