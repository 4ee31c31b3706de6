"""State discretisation, state coverage and distinct-crash counting."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Set, Tuple

import numpy as np

DEFAULT_BINS = (5, 10, 100)


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class BinGrid:
    bins_per_dim: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.bins_per_dim < 1:
            raise ValueError("bins_per_dim must be >= 1")
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo > hi):
            raise ValueError("bounds must be finite with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def n_cells(self) -> int:
        """Exact cell count; Python ints do not overflow for 100 bins in many dims."""
        return self.bins_per_dim ** self.dim


@functools.lru_cache(maxsize=4096)
def _exact_bin(s: float, lo: float, hi: float, bins: int) -> int:
    return math.floor((Fraction(s) - Fraction(lo)) * bins / (Fraction(hi) - Fraction(lo)))


def discretize(states: np.ndarray, grid: BinGrid) -> np.ndarray:
    """Cell index per dimension: ``floor((s - lower) / width)``, exact on the stored floats.

    Values outside the bounds clamp to the edge bins, and the exact upper bound
    belongs to the last bin. Zero-width dimensions map to bin 0. Accepts one
    state or a ``(n, dim)`` batch.
    """
    s = np.asarray(states, dtype=np.float64)
    if s.shape[-1] != grid.dim:
        raise ValueError(f"state dim {s.shape[-1]} does not match grid dim {grid.dim}")
    span = grid.upper - grid.lower
    safe = np.where(span > 0, span, 1.0)
    q = (s - grid.lower) * grid.bins_per_dim / safe
    idx = np.floor(q)
    # Float rounding can put a state sitting on a bin edge in the wrong bin; settle those exactly.
    near = np.abs(q - np.round(q)) < 1e-6
    if np.any(near):
        idx = idx.copy()
        for pos in zip(*np.nonzero(near)):
            k = pos[-1]
            if span[k] > 0:
                idx[pos] = _exact_bin(float(s[pos]), float(grid.lower[k]), float(grid.upper[k]), grid.bins_per_dim)
    idx = np.where(span > 0, idx, 0.0)
    idx = np.clip(idx, 0, grid.bins_per_dim - 1)
    dtype = np.uint8 if grid.bins_per_dim <= 256 else np.int64
    return idx.astype(dtype)


def unique_cells(cells: np.ndarray) -> Set[bytes]:
    cells = np.ascontiguousarray(np.atleast_2d(cells))
    return {row.tobytes() for row in cells}


def coverage_fraction(n_unique: int, grid: BinGrid) -> Fraction:
    return Fraction(n_unique, grid.n_cells)


def state_coverage(states: Sequence[np.ndarray], grid: BinGrid) -> float:
    """Fraction of grid cells visited by ``states``."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("state_coverage needs at least one state")
    n = len(unique_cells(discretize(np.atleast_2d(arr), grid)))
    return float(coverage_fraction(n, grid))


def ground_type_coverage(ground_types: Iterable[int], alphabet_size: int) -> float:
    """Fraction of the ground-type alphabet that was encountered."""
    seen = {int(g) for g in ground_types}
    if not seen:
        raise EmptyInput("ground_type_coverage needs at least one ground type")
    return len(seen & set(range(alphabet_size))) / alphabet_size


def distinct_crashes(crashes: Sequence[np.ndarray], grid: BinGrid) -> int:
    """Number of distinct grid cells among crash seeds."""
    arr = np.asarray(crashes, dtype=np.float64)
    if arr.size == 0:
        return 0
    return len(unique_cells(discretize(np.atleast_2d(arr), grid)))


def format_fraction(value: Fraction) -> str:
    """Scientific notation that stays meaningful when the denominator is astronomically large."""
    if value == 0:
        return "0"
    num, den = value.numerator, value.denominator
    exp = len(str(num)) - len(str(den))
    mant = Fraction(num, den) / Fraction(10) ** exp
    while mant < 1:
        mant *= 10
        exp -= 1
    while mant >= 10:
        mant /= 10
        exp += 1
    text = f"{float(mant):.4f}"
    if text == "10.0000":  # mantissa rounded up to the next decade
        text, exp = "1.0000", exp + 1
    return f"{text}e{exp:+03d}"


class CoverageTracker:
    """Accumulates visited cells (or ground types) over a campaign's episodes."""

    def __init__(self, env, bins: Sequence[int] = DEFAULT_BINS):
        self.kind = getattr(env, "coverage_kind", "grid")
        self.env = env
        spec = env.spec
        self.grids = {int(b): BinGrid(int(b), spec.obs_lower, spec.obs_upper) for b in bins}
        self.cells = {b: set() for b in self.grids}
        self.ground_types: Set[int] = set()
        self.n_states = 0

    def observe(self, states: np.ndarray) -> None:
        self.n_states += len(states)
        if self.kind == "ground_types":
            self.ground_types.update(self.env.encountered_ground_types(states))
            return
        for b, grid in self.grids.items():
            self.cells[b].update(unique_cells(discretize(states, grid)))

    def fraction(self, bins: int) -> Fraction:
        if self.kind == "ground_types":
            return Fraction(len(self.ground_types), self.env.alphabet_size)
        return coverage_fraction(len(self.cells[bins]), self.grids[bins])

    def summary(self) -> dict:
        if self.n_states == 0:
            return {}
        if self.kind == "ground_types":
            return {"ground_types": format_fraction(self.fraction(0))}
        return {str(b): format_fraction(self.fraction(b)) for b in self.grids}

    def cell_arrays(self) -> dict:
        out = {}
        for b, cells in self.cells.items():
            dtype = np.uint8 if b <= 256 else np.int64
            dim = self.grids[b].dim
            buf = b"".join(sorted(cells))
            out[str(b)] = np.frombuffer(buf, dtype=dtype).reshape(-1, dim)
        return out
