"""Corridor walker: a scripted strider crossing a sequence of ground types.

State layout (``length + 2`` dims)::

    g_0 .. g_{length-1}, position, stride_energy

``g_k`` is the ground type of cell ``k`` (0 flat, 1 low hurdle, 2 high hurdle,
3 pit). The walker advances one cell per step. Crossing an obstacle drains
stride energy and every flat cell restores one unit, up to the cap. The
controller has no look-ahead, so obstacle runs that outpace its recovery
make it fall: that is the crash.

Seeds are ground sequences. The first ``flat_prefix`` cells are flat and
every obstacle is followed by at least one flat.
"""
from __future__ import annotations

import numpy as np

from ..mdp import EnvSpec, Environment, LegalSpace, register_predicate
from .base import register_crash_predicate, register_env

FLAT, LOW, HIGH, PIT = range(4)
GROUND_TYPES = ("flat", "hurdle-low", "hurdle-high", "pit")
COST = (-1, 1, 2, 2)  # flat refunds one unit
ENERGY_CAP = 3
LENGTH = 60
FLAT_PREFIX = 20


def ground_rules_ok(seq, flat_prefix: int = FLAT_PREFIX) -> bool:
    g = np.asarray(seq, dtype=np.float64)
    if np.any(g != np.round(g)) or np.any(g < 0) or np.any(g > PIT):
        return False
    if np.any(g[:flat_prefix] != FLAT):
        return False
    obstacle = g != FLAT
    return not np.any(obstacle[1:] & obstacle[:-1])


@register_predicate("corridor_ground_rules")
def corridor_ground_rules(state: np.ndarray) -> bool:
    n = state.size - 2
    return ground_rules_ok(state[:n]) and state[n] == 0.0 and state[n + 1] == ENERGY_CAP


@register_crash_predicate("corridor_fall")
def corridor_crash(state: np.ndarray) -> bool:
    return bool(state[-1] < 0.0)


def corridor_policy(state) -> int:
    """Stride type matched to the ground under the next step."""
    n = state.size - 2
    pos = int(state[n])
    return int(state[pos]) if pos < n else FLAT


@register_env("corridor")
class Corridor(Environment):
    coverage_kind = "ground_types"
    alphabet_size = len(GROUND_TYPES)

    def __init__(self, max_step: int = 300, length: int = LENGTH, obstacle_rate: float = 0.15):
        if length <= FLAT_PREFIX:
            raise ValueError(f"length must exceed the {FLAT_PREFIX}-cell flat prefix")
        self.length = length
        self.obstacle_rate = obstacle_rate
        lower = np.zeros(length + 2)
        upper = np.full(length + 2, float(PIT))
        upper[:FLAT_PREFIX] = FLAT
        upper[length] = 0.0
        lower[length + 1] = upper[length + 1] = ENERGY_CAP
        obs_lower = lower.copy()
        obs_upper = upper.copy()
        obs_upper[length] = length
        obs_lower[length + 1] = -1.0
        self.spec = EnvSpec(
            name="corridor",
            state_dim=length + 2,
            legal_space=LegalSpace(lower, upper, "corridor_ground_rules"),
            max_step=max_step,
            crash_predicate_id="corridor_fall",
            obs_lower=obs_lower,
            obs_upper=obs_upper,
        )

    def make_agent(self):
        return corridor_policy

    def is_crash(self, state):
        return corridor_crash(state)

    def is_terminal(self, state):
        return state[self.length] >= self.length

    def check_action(self, action):
        return isinstance(action, (int, np.integer)) and 0 <= int(action) < len(GROUND_TYPES)

    def step(self, state, action, rng):
        n = self.length
        nxt = state.copy()
        pos = int(state[n])
        ground = int(state[pos])
        # A stride that does not match the ground costs an extra unit.
        cost = COST[ground] + (0 if int(action) == ground else 1)
        nxt[n + 1] = min(ENERGY_CAP, state[n + 1] - cost)
        nxt[n] = pos + 1
        reward = 0.01 - 0.05 * max(cost, 0)
        if nxt[n + 1] < 0:
            reward -= 1.0
        return nxt, reward

    def encountered_ground_types(self, states: np.ndarray):
        states = np.atleast_2d(states)
        n = self.length
        pos = np.clip(states[:, n].astype(int), 0, n - 1)
        return set(int(g) for g in states[np.arange(len(states)), pos])

    # -- seeds ---------------------------------------------------------------

    def _state(self, seq: np.ndarray) -> np.ndarray:
        return np.concatenate([seq.astype(np.float64), [0.0, float(ENERGY_CAP)]])

    def sample_initial(self, rng, max_tries: int = 1000):
        seq = np.zeros(self.length)
        prev_obstacle = True
        for k in range(FLAT_PREFIX, self.length):
            if not prev_obstacle and rng.random() < self.obstacle_rate:
                seq[k] = rng.integers(LOW, PIT + 1)
                prev_obstacle = True
            else:
                prev_obstacle = False
        return self._state(seq)

    def _resample(self, seed: np.ndarray, count: int, rng) -> np.ndarray:
        out = seed.copy()
        for k in rng.choice(np.arange(FLAT_PREFIX, self.length), size=count, replace=False):
            out[k] = rng.integers(FLAT, PIT + 1)
        return out

    def propose_mutation(self, seed, magnitude, rng):
        """Resample one or two cells past the flat prefix; the caller rejects rule violations."""
        if not np.any(magnitude):
            return seed.copy()
        return self._resample(seed, int(rng.integers(1, 3)), rng)

    def perturb_clamped(self, seed, magnitude, rng):
        """Smallest discrete perturbation: one cell resampled among the types the rules allow there."""
        if magnitude == 0:
            return seed.copy()
        n = self.length
        k = int(rng.integers(FLAT_PREFIX, n))
        neighbours_flat = seed[k - 1] == FLAT and (k + 1 >= n or seed[k + 1] == FLAT)
        choices = [FLAT, LOW, HIGH, PIT] if neighbours_flat else [FLAT]
        out = seed.copy()
        out[k] = choices[int(rng.integers(len(choices)))]
        return out
