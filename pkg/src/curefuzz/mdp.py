"""Core domain types: states, legal spaces, trajectories and episode execution.

States are plain 1-D ``float64`` numpy arrays. A trajectory stores the
induced state sequence as a ``(steps, dim)`` array whose first row is the
initial state; actions are never stored, replay regenerates them.
"""
from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np


class MDPError(Exception):
    """Base class for episode-execution errors."""


class IllegalInitialState(MDPError):
    pass


class InitialCrash(MDPError):
    pass


class AgentFailure(MDPError):
    """The agent (or the adapter standing in for it) misbehaved."""


class DimensionMismatch(ValueError):
    pass


def as_state(values: Sequence[float], dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy ``values`` into a finite 1-D float64 state vector."""
    s = np.array(values, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise DimensionMismatch(f"state must be a non-empty 1-D vector, got shape {s.shape}")
    if dim is not None and s.size != dim:
        raise DimensionMismatch(f"expected state of dim {dim}, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise ValueError("state contains NaN or Inf")
    return s


# Named extra validity rules, addressable by id so that remote specs can refer to them.
PREDICATES: Dict[str, Callable[[np.ndarray], bool]] = {}


def register_predicate(name: str):
    def deco(fn):
        PREDICATES[name] = fn
        return fn

    return deco


@dataclass(frozen=True)
class LegalSpace:
    lower: np.ndarray
    upper: np.ndarray
    extra_predicate_id: Optional[str] = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"lower > upper on dimension {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, s: np.ndarray) -> bool:
        s = np.asarray(s, dtype=np.float64)
        if s.shape != self.lower.shape or not np.all(np.isfinite(s)):
            return False
        if np.any(s < self.lower) or np.any(s > self.upper):
            return False
        if self.extra_predicate_id is not None:
            pred = PREDICATES.get(self.extra_predicate_id)
            if pred is not None and not pred(s):
                return False
        return True

    def clamp(self, s: np.ndarray) -> np.ndarray:
        return np.clip(s, self.lower, self.upper)

    def sample_box(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    legal_space: LegalSpace
    max_step: int
    crash_predicate_id: str
    obs_lower: np.ndarray
    obs_upper: np.ndarray

    def __post_init__(self):
        if self.state_dim != self.legal_space.dim:
            raise ValueError("state_dim does not match legal space dimension")
        object.__setattr__(self, "obs_lower", np.asarray(self.obs_lower, dtype=np.float64))
        object.__setattr__(self, "obs_upper", np.asarray(self.obs_upper, dtype=np.float64))
        if self.obs_lower.shape != (self.state_dim,) or self.obs_upper.shape != (self.state_dim,):
            raise ValueError("observation bounds must match state_dim")
        if np.any(self.obs_lower > self.obs_upper):
            raise ValueError("observation lower > upper")
        if self.max_step < 1:
            raise ValueError("max_step must be positive")

    def to_dict(self) -> Dict[str, Any]:
        ls = self.legal_space
        return {
            "name": self.name,
            "state_dim": self.state_dim,
            "lower": ls.lower.tolist(),
            "upper": ls.upper.tolist(),
            "extra_predicate_id": ls.extra_predicate_id,
            "max_step": self.max_step,
            "crash_predicate_id": self.crash_predicate_id,
            "obs_lower": self.obs_lower.tolist(),
            "obs_upper": self.obs_upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EnvSpec":
        space = LegalSpace(
            np.asarray(d["lower"], dtype=np.float64),
            np.asarray(d["upper"], dtype=np.float64),
            d.get("extra_predicate_id"),
        )
        return cls(
            name=str(d["name"]),
            state_dim=int(d["state_dim"]),
            legal_space=space,
            max_step=int(d["max_step"]),
            crash_predicate_id=str(d.get("crash_predicate_id") or ""),
            obs_lower=np.asarray(d.get("obs_lower", d["lower"]), dtype=np.float64),
            obs_upper=np.asarray(d.get("obs_upper", d["upper"]), dtype=np.float64),
        )

    def __eq__(self, other):
        if not isinstance(other, EnvSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


@dataclass
class Trajectory:
    states: np.ndarray
    cumulative_reward: float
    crashed: bool

    @property
    def steps(self) -> int:
        return int(self.states.shape[0])

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def canonical_bytes(self) -> bytes:
        steps, dim = self.states.shape
        head = struct.pack("<QQdB", steps, dim, float(self.cumulative_reward), int(bool(self.crashed)))
        return head + np.ascontiguousarray(self.states, dtype="<f8").tobytes()

    def digest(self) -> int:
        """64-bit digest of the fixed-width little-endian encoding."""
        h = hashlib.blake2b(self.canonical_bytes(), digest_size=8)
        return int.from_bytes(h.digest(), "little")


@dataclass
class EpisodeOutcome:
    trajectory: Trajectory
    wall_time_ms: int


class Environment:
    """Black-box environment contract.

    Subclasses implement ``is_crash``, ``step`` and ``make_agent``; everything
    else has a workable default. ``step`` must draw randomness only from the
    generator it is handed so that episodes are reproducible from a seed.
    """

    spec: EnvSpec

    def is_crash(self, state: np.ndarray) -> bool:
        raise NotImplementedError

    def is_terminal(self, state: np.ndarray) -> bool:
        return False

    def step(self, state: np.ndarray, action: Any, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
        raise NotImplementedError

    def check_action(self, action: Any) -> bool:
        return True

    def make_agent(self) -> Callable[[np.ndarray], Any]:
        raise NotImplementedError

    def is_legal_initial(self, state: np.ndarray) -> bool:
        return self.spec.legal_space.contains(state) and not self.is_crash(state)

    def sample_initial(self, rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
        space = self.spec.legal_space
        for _ in range(max_tries):
            s = space.sample_box(rng)
            if self.is_legal_initial(s):
                return s
        raise IllegalInitialState(f"{self.spec.name}: could not sample a legal initial state")

    def propose_mutation(self, seed: np.ndarray, magnitude: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ext = self.spec.legal_space.extent
        return seed + rng.uniform(-1.0, 1.0, seed.shape) * magnitude * ext

    def perturb_clamped(self, seed: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
        space = self.spec.legal_space
        delta = rng.uniform(-1.0, 1.0, seed.shape) * magnitude * space.extent
        return space.clamp(seed + delta)

    def iter_steps(self, agent, initial: np.ndarray, max_step: int, rng_seed: int):
        """Yield ``(next_state, reward, crashed, done)`` per step; episode length counts the initial state."""
        rng = np.random.default_rng(rng_seed)
        s = initial
        n = 1
        while n < max_step:
            try:
                action = agent(s)
            except Exception as exc:  # agent code is untrusted
                raise AgentFailure(f"agent raised {exc!r}") from exc
            if not self.check_action(action):
                raise AgentFailure(f"malformed action {action!r}")
            s, r = self.step(s, action, rng)
            n += 1
            crashed = bool(self.is_crash(s))
            done = crashed or n >= max_step or bool(self.is_terminal(s))
            yield s, float(r), crashed, done
            if done:
                return

    def rollout(self, agent, initial: np.ndarray, max_step: int, rng_seed: int) -> Trajectory:
        states = [initial]
        total = 0.0
        crashed = False
        for s, r, crashed, _ in self.iter_steps(agent, initial, max_step, rng_seed):
            states.append(s)
            total += r
        return Trajectory(np.vstack(states), float(total), crashed)


def run_episode(
    env: Environment,
    agent,
    initial: Sequence[float],
    max_step: Optional[int] = None,
    rng_seed: int = 0,
) -> EpisodeOutcome:
    """Roll out one episode from ``initial`` under the fixed policy ``agent``."""
    s0 = as_state(initial, env.spec.state_dim)
    if max_step is None:
        max_step = env.spec.max_step
    if max_step < 1:
        raise ValueError("max_step must be positive")
    if not env.spec.legal_space.contains(s0):
        raise IllegalInitialState(f"initial state outside the legal space of {env.spec.name}")
    if env.is_crash(s0):
        raise InitialCrash(f"initial state already crashes in {env.spec.name}")
    t0 = time.perf_counter()
    traj = env.rollout(agent, s0, int(max_step), int(rng_seed))
    return EpisodeOutcome(traj, int((time.perf_counter() - t0) * 1000))


def is_crashed(t: Trajectory) -> bool:
    return t.crashed
