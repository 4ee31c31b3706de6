"""Brute-force crash-region enumeration over a grid of initial states."""
from __future__ import annotations

import itertools
import math
from typing import Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..mdp import Environment, IllegalInitialState, InitialCrash, run_episode
from .base import make_env

MAX_CELLS = 10**6

# The committed encounter fixture sweeps intruder offset and heading with the
# ownship at the origin, heading east, both aircraft at 650 ft/s.
ENCOUNTER_SLICE_DIMS = (4, 5, 6)
ENCOUNTER_SLICE_BASE = (0.0, 0.0, 0.0, 650.0, 0.0, 0.0, 0.0, 650.0)


class ResolutionTooLarge(ValueError):
    pass


def cell_centers(lower: np.ndarray, upper: np.ndarray, resolution: Sequence[int]):
    width = (upper - lower) / np.asarray(resolution, dtype=np.float64)
    axes = [lower[k] + (np.arange(r) + 0.5) * width[k] for k, r in enumerate(resolution)]
    return axes


def crash_region_oracle(
    env: Union[str, Environment],
    grid_resolution: Union[int, Sequence[int]],
    dims: Optional[Sequence[int]] = None,
    base: Optional[Sequence[float]] = None,
    rng_seed: int = 0,
) -> Set[Tuple[int, ...]]:
    """Simulate one episode from every cell center and return the cells that crash.

    ``dims`` selects the swept state dimensions (default: every dimension of
    the legal box with non-zero extent); the rest are held at ``base``
    (default: the box midpoint). Cells whose center is not a legal initial
    state are skipped.
    """
    if isinstance(env, str):
        env = make_env(env)
    space = env.spec.legal_space
    if dims is None:
        dims = [k for k in range(space.dim) if space.extent[k] > 0]
    dims = list(dims)
    res = [int(grid_resolution)] * len(dims) if np.isscalar(grid_resolution) else [int(r) for r in grid_resolution]
    if len(res) != len(dims):
        raise ValueError("one resolution per swept dimension")
    if any(r < 1 for r in res):
        raise ValueError("resolutions must be positive")
    n_cells = math.prod(res)
    if n_cells > MAX_CELLS:
        raise ResolutionTooLarge(f"{n_cells} cells exceeds the {MAX_CELLS} enumeration limit")
    state = (space.lower + space.upper) / 2.0 if base is None else np.array(base, dtype=np.float64)
    axes = cell_centers(space.lower[dims], space.upper[dims], res)
    agent = env.make_agent()
    crashing = set()
    for idx in itertools.product(*(range(r) for r in res)):
        s = state.copy()
        for k, d in enumerate(dims):
            s[d] = axes[k][idx[k]]
        try:
            traj = run_episode(env, agent, s, rng_seed=rng_seed).trajectory
        except (IllegalInitialState, InitialCrash):
            continue
        if traj.crashed:
            crashing.add(tuple(idx))
    return crashing


def encounter_slice(resolution: Tuple[int, int, int] = (50, 50, 8)) -> Set[Tuple[int, ...]]:
    return crash_region_oracle("encounter", resolution, ENCOUNTER_SLICE_DIMS, ENCOUNTER_SLICE_BASE)
