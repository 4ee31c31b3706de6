"""Seed energy, energy-proportional selection, corpus bookkeeping and robustness."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional

import numpy as np

from .mdp import Environment, IllegalInitialState, InitialCrash, Trajectory, run_episode

EXP_CLAMP = 50.0
ROBUSTNESS_RETRIES = 8
SNAPSHOT_VERSION = 1


class EmptyCorpus(Exception):
    pass


@dataclass(frozen=True)
class EnergyParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.gamma)):
            raise ValueError("energy parameters must be finite")


def _clamped_exp(x: float) -> float:
    return math.exp(min(EXP_CLAMP, max(-EXP_CLAMP, x)))


def seed_energy(reward: float, intrinsic: float, robustness: float, params: EnergyParams) -> float:
    """``exp(-alpha*reward) + exp(beta*intrinsic) + gamma*robustness``, exponents clamped to [-50, 50]."""
    return (
        _clamped_exp(-params.alpha * reward)
        + _clamped_exp(params.beta * intrinsic)
        + params.gamma * robustness
    )


@dataclass
class CorpusEntry:
    seed: np.ndarray
    cumulative_reward: float
    intrinsic: float
    robustness: float
    energy: float = 0.0
    parent_id: Optional[int] = None
    born_at_iter: int = 0
    episode_seed: int = 0
    id: int = -1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = self.seed.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusEntry":
        d = dict(d)
        d["seed"] = np.asarray(d["seed"], dtype=np.float64)
        return cls(**d)


class Corpus:
    """Persistent seed pool. Seeds are selected with probability energy / total energy.

    Entries live in a dense slot array so selection is a single cumulative-sum
    search; eviction swaps the removed slot with the last one.
    """

    def __init__(self, params: EnergyParams = EnergyParams(), max_size: int = 2000):
        if max_size < 1:
            raise ValueError("max_size must be positive")
        self.params = params
        self.max_size = max_size
        self._entries: Dict[int, CorpusEntry] = {}
        self._slots: List[int] = []
        self._energy = np.zeros(16, dtype=np.float64)
        self._keys: Dict[bytes, int] = {}
        self._next_id = 0
        self.total_energy = 0.0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._slots)

    def __iter__(self) -> Iterator[CorpusEntry]:
        return (self._entries[i] for i in self._slots)

    def __getitem__(self, entry_id: int) -> CorpusEntry:
        return self._entries[entry_id]

    def __contains__(self, seed) -> bool:
        return self._key(seed) in self._keys

    @staticmethod
    def _key(seed) -> bytes:
        return np.ascontiguousarray(seed, dtype=np.float64).tobytes()

    def energy_of(self, cumulative_reward: float, intrinsic: float, robustness: float) -> float:
        return seed_energy(cumulative_reward, intrinsic, robustness, self.params)

    def energies(self) -> np.ndarray:
        return self._energy[: len(self._slots)].copy()

    def ids(self) -> List[int]:
        return list(self._slots)

    def recompute_total(self) -> float:
        return math.fsum(self._energy[: len(self._slots)])

    def insert(self, entry: CorpusEntry) -> Optional[int]:
        """Insert unconditionally (duplicates excepted); returns the new id or None."""
        if entry.robustness < 0:
            raise ValueError("robustness must be non-negative")
        key = self._key(entry.seed)
        if key in self._keys:
            return None
        entry.energy = self.energy_of(entry.cumulative_reward, entry.intrinsic, entry.robustness)
        if not entry.energy > 0:
            raise ValueError("seed energy must be positive")
        entry.id = self._next_id
        self._next_id += 1
        n = len(self._slots)
        if n == self._energy.size:
            self._energy = np.concatenate([self._energy, np.zeros(n)])
        self._entries[entry.id] = entry
        self._slots.append(entry.id)
        self._energy[n] = entry.energy
        self._keys[key] = entry.id
        self.total_energy += entry.energy
        while len(self._slots) > self.max_size:
            self.evict(self._slots[int(np.argmin(self._energy[: len(self._slots)]))])
        return entry.id if entry.id in self._entries else None

    def evict(self, entry_id: int) -> None:
        entry = self._entries.pop(entry_id)
        slot = self._slots.index(entry_id)
        last = len(self._slots) - 1
        self._slots[slot] = self._slots[last]
        self._energy[slot] = self._energy[last]
        self._slots.pop()
        self._energy[last] = 0.0
        del self._keys[self._key(entry.seed)]
        self.total_energy -= entry.energy
        self.evictions += 1

    def update_entry(self, entry_id: int, **fields) -> None:
        """Change stored fields and recompute the entry's energy."""
        entry = self._entries[entry_id]
        for k, v in fields.items():
            setattr(entry, k, v)
        old = entry.energy
        entry.energy = self.energy_of(entry.cumulative_reward, entry.intrinsic, entry.robustness)
        self._energy[self._slots.index(entry_id)] = entry.energy
        self.total_energy += entry.energy - old

    def to_list(self) -> List[dict]:
        return [e.to_dict() for e in self]

    def to_dict(self) -> dict:
        """Versioned snapshot; entries in slot order so selection replays identically after reload."""
        return {
            "version": SNAPSHOT_VERSION,
            "params": asdict(self.params),
            "max_size": self.max_size,
            "next_id": self._next_id,
            "evictions": self.evictions,
            "entries": self.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Corpus":
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported corpus snapshot version {d.get('version')!r}")
        corpus = cls(EnergyParams(**d["params"]), int(d["max_size"]))
        for raw in d["entries"]:
            entry = CorpusEntry.from_dict(raw)
            n = len(corpus._slots)
            if n == corpus._energy.size:
                corpus._energy = np.concatenate([corpus._energy, np.zeros(n)])
            entry.energy = corpus.energy_of(entry.cumulative_reward, entry.intrinsic, entry.robustness)
            corpus._entries[entry.id] = entry
            corpus._slots.append(entry.id)
            corpus._energy[n] = entry.energy
            corpus._keys[cls._key(entry.seed)] = entry.id
            corpus.total_energy += entry.energy
        corpus._next_id = int(d["next_id"])
        corpus.evictions = int(d["evictions"])
        return corpus


def select_seed(corpus: Corpus, rng: np.random.Generator) -> int:
    """Draw an entry id with probability energy / total energy; the entry stays in the corpus."""
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot select from an empty corpus")
    cum = np.cumsum(corpus._energy[:n])
    u = rng.random() * cum[-1]
    k = int(np.searchsorted(cum, u, side="right"))
    return corpus._slots[min(k, n - 1)]


def is_interesting(intrinsic: float, reward: float, parent_reward: float, novelty_threshold: float) -> bool:
    return intrinsic > novelty_threshold or reward < parent_reward


def admit(corpus: Corpus, candidate: CorpusEntry, novelty_threshold: float) -> bool:
    """Insert ``candidate`` if it is novel enough or regresses its parent's reward."""
    if candidate.parent_id is None:
        parent_reward = math.inf  # initial seeds always qualify
    else:
        parent = corpus._entries.get(candidate.parent_id)
        # An evicted parent leaves only the novelty test.
        parent_reward = -math.inf if parent is None else parent.cumulative_reward
    if not is_interesting(candidate.intrinsic, candidate.cumulative_reward, parent_reward, novelty_threshold):
        return False
    return corpus.insert(candidate) is not None


def robustness(
    seed: np.ndarray,
    traj: Trajectory,
    env: Environment,
    agent,
    perturb_magnitude: float,
    rng: np.random.Generator,
    episode_seed: int = 0,
    max_step: Optional[int] = None,
) -> float:
    """Distance between the final state of ``traj`` and that of a slightly perturbed rerun.

    The perturbed seed is clamped into the legal box. If it still violates an
    extra validity rule or crashes immediately, a fresh perturbation is drawn;
    after 8 failures the seed is scored 0.
    """
    for _ in range(ROBUSTNESS_RETRIES):
        s_delta = env.perturb_clamped(seed, perturb_magnitude, rng)
        if not env.is_legal_initial(s_delta):
            continue
        try:
            out = run_episode(env, agent, s_delta, max_step, episode_seed)
        except (IllegalInitialState, InitialCrash):
            continue
        return float(np.linalg.norm(traj.final - out.trajectory.final))
    return 0.0
