from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from curefuzz.coverage import (
    BinGrid,
    CoverageTracker,
    EmptyInput,
    coverage_fraction,
    discretize,
    distinct_crashes,
    format_fraction,
    ground_type_coverage,
    state_coverage,
    unique_cells,
)
from curefuzz.envs import make_env
from curefuzz.mdp import run_episode

from oracles import cell_oracle, coverage_oracle, distinct_oracle

UNIT = BinGrid(5, np.zeros(1), np.ones(1))


def test_bin_grid_validation():
    with pytest.raises(ValueError):
        BinGrid(0, np.zeros(1), np.ones(1))
    with pytest.raises(ValueError):
        BinGrid(5, np.ones(1), np.zeros(1))
    with pytest.raises(ValueError):
        BinGrid(5, np.zeros(1), np.array([np.inf]))


def test_midpoint_and_upper_edge():
    assert discretize(np.array([0.5]), UNIT).tolist() == [2]
    assert discretize(np.array([1.0]), UNIT).tolist() == [4]
    assert discretize(np.array([0.0]), UNIT).tolist() == [0]


def test_out_of_bounds_clamps_and_zero_span_is_bin_zero():
    grid = BinGrid(4, np.array([0.0, 2.0]), np.array([1.0, 2.0]))
    assert discretize(np.array([[-3.0, 2.0], [9.0, 2.0]]), grid).tolist() == [[0, 0], [3, 0]]


def test_discretize_matches_exact_oracle_on_random_and_edge_states():
    rng = np.random.default_rng(0)
    lo, hi = np.array([-1.0, 0.0, -0.1]), np.array([1.0, 3.0, 0.2])
    edges = lo + np.outer(rng.integers(0, 11, 1000), (hi - lo) / 10)
    for states in (rng.uniform(lo, hi, (1000, 3)), edges):
        got = discretize(states, BinGrid(10, lo, hi))
        want = [cell_oracle(s, lo.tolist(), hi.tolist(), 10) for s in states.tolist()]
        assert [tuple(int(v) for v in c) for c in got] == want


def test_single_cell_and_full_cover():
    grid = BinGrid(5, np.zeros(2), np.ones(2))
    assert state_coverage(np.full((7, 2), 0.31), grid) == 1 / 25
    centers = (np.arange(5) + 0.5) / 5
    pts = np.array([[x, y] for x in centers for y in centers])
    assert state_coverage(pts, grid) == 1.0


def test_empty_inputs():
    with pytest.raises(EmptyInput):
        state_coverage([], UNIT)
    with pytest.raises(EmptyInput):
        ground_type_coverage([], 4)
    assert distinct_crashes([], UNIT) == 0


def test_distinct_crash_examples():
    assert distinct_crashes([np.array([0.3])] * 10, UNIT) == 1
    centers = [np.array([(k + 0.5) / 5]) for k in range(4)]
    assert distinct_crashes(centers, UNIT) == 4


@pytest.mark.parametrize("bins", [5, 10, 100])
def test_coverage_and_distinct_match_oracles(bins):
    rng = np.random.default_rng(bins)
    env = make_env("encounter")
    lo, hi = env.spec.obs_lower, env.spec.obs_upper
    states = rng.uniform(lo, hi, (1000, 8))
    grid = BinGrid(bins, lo, hi)
    got = coverage_fraction(len(unique_cells(discretize(states, grid))), grid)
    assert got == coverage_oracle(states.tolist(), lo.tolist(), hi.tolist(), bins)
    # Crash seeds drawn from a handful of clusters so duplicates occur at coarse bins.
    space = env.spec.legal_space
    centres = rng.uniform(space.lower, space.upper, (20, 8))
    seeds = centres[rng.integers(20, size=500)] + rng.normal(0, 1e-3, (500, 8)) * space.extent
    seeds = space.clamp(seeds)
    cgrid = BinGrid(bins, space.lower, space.upper)
    assert distinct_crashes(seeds, cgrid) == distinct_oracle(seeds.tolist(), space.lower.tolist(), space.upper.tolist(), bins)


def test_big_denominator_is_exact():
    grid = BinGrid(100, np.zeros(12), np.ones(12))
    assert grid.n_cells == 10**24
    frac = coverage_fraction(3, grid)
    assert frac == Fraction(3, 10**24)
    assert format_fraction(frac) == "3.0000e-24"
    assert format_fraction(Fraction(0)) == "0"
    assert format_fraction(Fraction(1)) == "1.0000e+00"
    assert format_fraction(Fraction(999, 1000)) == "9.9900e-01"
    assert format_fraction(Fraction(999999, 10**7)) == "1.0000e-01"
    assert format_fraction(Fraction(3, 10**200)) == "3.0000e-200"


def test_ground_type_coverage():
    assert ground_type_coverage([0, 0, 3], 4) == 0.5
    assert ground_type_coverage(range(4), 4) == 1.0


def test_tracker_grid_matches_batch_functions():
    env = make_env("navi2d")
    tr = CoverageTracker(env)
    rng = np.random.default_rng(1)
    seen = []
    for _ in range(20):
        traj = run_episode(env, env.make_agent(), env.sample_initial(rng), rng_seed=int(rng.integers(99))).trajectory
        tr.observe(traj.states)
        seen.append(traj.states)
    allstates = np.concatenate(seen)
    for b in (5, 10, 100):
        grid = BinGrid(b, env.spec.obs_lower, env.spec.obs_upper)
        assert float(tr.fraction(b)) == state_coverage(allstates, grid)
        assert len(tr.cell_arrays()[str(b)]) == len(tr.cells[b])
    assert set(tr.summary()) == {"5", "10", "100"}


def test_tracker_ground_types():
    env = make_env("corridor")
    tr = CoverageTracker(env)
    assert tr.summary() == {}
    traj = run_episode(env, env.make_agent(), env.sample_initial(np.random.default_rng(0))).trajectory
    tr.observe(traj.states)
    seq = traj.states[0, : env.length]
    assert tr.fraction(0) == Fraction(len(set(seq.astype(int).tolist())), 4)
    assert set(tr.summary()) == {"ground_types"}


state_sets = arrays(np.float64, st.tuples(st.integers(1, 30), st.just(2)), elements=st.floats(-0.5, 1.5, allow_nan=False))


@given(a=state_sets, b=state_sets)
def test_monotonicity(a, b):
    grid = BinGrid(10, np.zeros(2), np.ones(2))
    both = np.concatenate([a, b])
    assert state_coverage(both, grid) >= state_coverage(a, grid)
    assert distinct_crashes(both, grid) >= distinct_crashes(a, grid)
    assert 0 < state_coverage(a, grid) <= 1
    assert distinct_crashes(a, grid) <= len(a)


@given(a=state_sets)
def test_refinement(a):
    counts = [distinct_crashes(a, BinGrid(b, np.zeros(2), np.ones(2))) for b in (5, 10, 100)]
    assert counts[0] <= counts[1] <= counts[2]
