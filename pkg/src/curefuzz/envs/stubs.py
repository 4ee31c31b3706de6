"""Trivial environments used as test fixtures."""
from __future__ import annotations

import numpy as np

from ..mdp import EnvSpec, Environment, LegalSpace
from .base import register_crash_predicate, register_env


@register_crash_predicate("flag_set")
def flag_set(state: np.ndarray) -> bool:
    return bool(state[-1] > 0.5)


class _FlagEnv(Environment):
    """``dim`` free coordinates in [0, 1] plus a trailing crash flag that starts at 0."""

    name = "stub"
    coverage_kind = "grid"

    def __init__(self, dim: int = 2, max_step: int = 10):
        lower = np.zeros(dim + 1)
        upper = np.append(np.ones(dim), 0.0)
        self.spec = EnvSpec(
            name=self.name,
            state_dim=dim + 1,
            legal_space=LegalSpace(lower, upper),
            max_step=max_step,
            crash_predicate_id="flag_set",
            obs_lower=lower,
            obs_upper=np.ones(dim + 1),
        )

    def is_crash(self, state):
        return flag_set(state)

    def make_agent(self):
        return lambda s: 0


@register_env("stub-frozen")
class FrozenEnv(_FlagEnv):
    """Identity dynamics: the episode ends after one step with the state unchanged. Never crashes."""

    name = "stub-frozen"

    def step(self, state, action, rng):
        return state.copy(), 0.0

    def is_terminal(self, state):
        return True


@register_env("stub-safe")
class AlwaysSafeEnv(FrozenEnv):
    name = "stub-safe"


@register_env("stub-crash")
class AlwaysCrashEnv(_FlagEnv):
    """Every episode crashes on its first step."""

    name = "stub-crash"

    def step(self, state, action, rng):
        nxt = state.copy()
        nxt[-1] = 1.0
        return nxt, -1.0
