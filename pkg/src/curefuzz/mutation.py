"""Seed mutation by rejection sampling inside the legal initial-state space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .mdp import Environment


class MutationExhausted(Exception):
    pass


@dataclass
class MutationConfig:
    """``magnitude`` is a fraction of each dimension's legal range (scalar or per-dimension)."""

    magnitude: Union[float, Sequence[float]] = 0.05
    max_retries: int = 50

    def __post_init__(self):
        mag = np.asarray(self.magnitude, dtype=np.float64)
        if np.any(mag < 0) or np.any(mag > 1):
            raise ValueError("mutation magnitude must lie in [0, 1]")
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")

    def magnitude_for(self, dim: int) -> np.ndarray:
        mag = np.asarray(self.magnitude, dtype=np.float64)
        if mag.ndim == 0:
            return np.full(dim, float(mag))
        if mag.shape != (dim,):
            raise ValueError(f"magnitude has {mag.size} entries, state has {dim}")
        return mag


def mutate(seed: np.ndarray, cfg: MutationConfig, env: Environment, rng: np.random.Generator) -> np.ndarray:
    """Perturb ``seed`` until the result is legal and not an initial crash.

    Out-of-range proposals are redrawn rather than clamped, so mutants are not
    piled up on the boundary of the legal space.
    """
    mag = cfg.magnitude_for(seed.size)
    for _ in range(cfg.max_retries):
        cand = env.propose_mutation(seed, mag, rng)
        if env.is_legal_initial(cand):
            return cand
    raise MutationExhausted(f"no valid mutant in {cfg.max_retries} draws")
