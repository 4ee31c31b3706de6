import json
import math

import numpy as np
import pytest

from curefuzz.envs import CRASH_PREDICATES, ENVIRONMENTS, make_env
from curefuzz.envs.corridor import FLAT, HIGH, LOW, PIT, ground_rules_ok
from curefuzz.envs.encounter import COC, MAX_SPEED, TURN_RATE, EncounterPolicy, no_turn_policy
from curefuzz.envs.navi2d import GOALS, Navi2dPolicy
from curefuzz.envs.oracle import (
    ENCOUNTER_SLICE_BASE,
    ENCOUNTER_SLICE_DIMS,
    ResolutionTooLarge,
    crash_region_oracle,
    encounter_slice,
)
from curefuzz.mdp import run_episode

from oracles import corridor_falls, corridor_suffixes, navi_simulate

G = np.array(GOALS)


def test_registry_lists_every_environment():
    assert {"navi2d", "encounter", "corridor", "stub-frozen", "stub-safe", "stub-crash"} <= set(ENVIRONMENTS)
    for name in ENVIRONMENTS:
        env = make_env(name)
        assert env.spec.crash_predicate_id in CRASH_PREDICATES
    with pytest.raises(KeyError, match="known"):
        make_env("no-such-env")


# -- navi2d ------------------------------------------------------------------


def test_navi2d_policy_at_goal_is_still():
    s = np.zeros(12)
    s[:6] = G.ravel()
    assert np.array_equal(Navi2dPolicy()(s), np.zeros((3, 2)))


def test_navi2d_policy_far_apart_heads_straight_at_goal():
    s = np.zeros(12)
    s[:6] = (G * -1.2).ravel()  # opposite sides, well outside the repulsion radius
    cmd = Navi2dPolicy()(s)
    for i in range(3):
        to_goal = G[i] - s[2 * i : 2 * i + 2]
        assert np.linalg.norm(cmd[i]) == pytest.approx(0.5)
        assert np.allclose(cmd[i] / 0.5, to_goal / np.linalg.norm(to_goal), atol=1e-12)


def _pincer(p, ds):
    starts = [p - d * (g - p) / np.linalg.norm(g - p) for g, d in zip(G, ds)]
    s = np.zeros(12)
    s[:6] = np.ravel(starts)
    return s


@pytest.mark.parametrize("episode", range(5))
def test_navi2d_crafted_crossing_crashes(episode):
    # Three agents whose straight paths cross near one point at staggered distances.
    # A symmetric pincer is resolved by the repulsion; this staggered one is not.
    env = make_env("navi2d")
    s = _pincer(np.array([-0.4, 0.0]), (0.3, 0.5, 0.7))
    traj = run_episode(env, env.make_agent(), s, rng_seed=episode).trajectory
    final, steps, crashed = navi_simulate(s.tolist(), episode)
    assert traj.crashed and crashed
    assert traj.steps == steps <= 40
    assert np.allclose(traj.final, final, rtol=0, atol=1e-12)


def test_navi2d_speed_limit():
    env = make_env("navi2d", noise=0.2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        traj = run_episode(env, env.make_agent(), env.sample_initial(rng), rng_seed=int(rng.integers(1000))).trajectory
        pos = traj.states[:, :6].reshape(len(traj.states), 3, 2)
        step = np.linalg.norm(np.diff(pos, axis=0), axis=2)
        assert np.all(step <= 0.5 * 0.1 + 1e-12)


# -- encounter ---------------------------------------------------------------


def test_encounter_diverging_intruder_behind_is_ignored():
    s = np.array([0.0, 0.0, 0.0, 500.0, -3000.0, 0.0, math.pi, 500.0])
    assert EncounterPolicy()(s) == COC


def test_encounter_head_on_gets_a_turn():
    s = np.array([0.0, 0.0, 0.0, 500.0, 5000.0, 0.0, math.pi, 500.0])
    assert EncounterPolicy()(s) != COC
    # From 8000 ft the turn resolves a head-on that flying straight would not.
    env = make_env("encounter")
    s[4] = 8000.0
    assert run_episode(env, no_turn_policy, s).trajectory.crashed
    assert not run_episode(env, env.make_agent(), s).trajectory.crashed


def test_encounter_overtaking_from_behind_is_the_blind_spot():
    s = np.array([0.0, 0.0, 0.0, 300.0, -3000.0, 0.0, 0.0, 1000.0])
    env = make_env("encounter")
    assert run_episode(env, env.make_agent(), s).trajectory.crashed
    # The same policy without the rear blind sector would have turned.
    assert EncounterPolicy(blind_sector=math.pi)(s) != COC


def test_encounter_actions_and_speeds_stay_in_range():
    env = make_env("encounter")
    agent = env.make_agent()
    rng = np.random.default_rng(3)
    for _ in range(50):
        traj = run_episode(env, agent, env.sample_initial(rng)).trajectory
        assert np.all(traj.states[:, [3, 7]] <= MAX_SPEED)
        rates = np.diff(np.unwrap(traj.states[:, 2])) / env.dt
        assert all(min(abs(r - t) for t in TURN_RATE) < 1e-9 for r in rates)


def test_encounter_fixture_matches_oracle(fixtures_dir):
    doc = json.loads((fixtures_dir / "encounter_crash_region_50x50x8.json").read_text())
    assert tuple(doc["dims"]) == ENCOUNTER_SLICE_DIMS and tuple(doc["base"]) == ENCOUNTER_SLICE_BASE
    frozen = {tuple(c) for c in doc["cells"]}
    assert encounter_slice(tuple(doc["resolution"])) == frozen
    # The crash region is a small sliver of the seed space.
    assert 0 < len(frozen) <= 0.05 * math.prod(doc["resolution"])


# -- corridor ----------------------------------------------------------------


def _corridor_state(env, suffix):
    seq = np.zeros(env.length)
    seq[env.length - len(suffix) :] = suffix
    return np.concatenate([seq, [0.0, 3.0]])


def test_corridor_flat_and_single_obstacle_never_fall():
    env = make_env("corridor", length=30)
    for suffix in ([FLAT] * 10, [FLAT] * 3 + [PIT] + [FLAT] * 6):
        traj = run_episode(env, env.make_agent(), _corridor_state(env, suffix)).trajectory
        assert not traj.crashed and traj.steps == env.length + 1


def test_corridor_hurdle_hurdle_pit_falls():
    env = make_env("corridor", length=30)
    suffix = [FLAT, HIGH, FLAT, HIGH, FLAT, PIT, FLAT, FLAT, FLAT, FLAT]
    traj = run_episode(env, env.make_agent(), _corridor_state(env, suffix)).trajectory
    assert traj.crashed
    assert corridor_falls(suffix) == 5
    assert int(traj.final[env.length]) == 20 + 5 + 1


def test_corridor_exhaustive_against_oracle():
    env = make_env("corridor", length=30)
    agent = env.make_agent()
    count = falls = 0
    for suffix in corridor_suffixes(10):
        s = _corridor_state(env, suffix)
        assert ground_rules_ok(s[: env.length])
        traj = run_episode(env, agent, s).trajectory
        want = corridor_falls(suffix)
        assert traj.crashed == (want is not None)
        if want is not None:
            assert int(traj.final[env.length]) == 20 + want + 1
            falls += 1
        count += 1
    assert count == 6160
    assert 0 < falls < count


def test_corridor_ground_rules():
    assert ground_rules_ok([FLAT] * 20 + [LOW, FLAT, HIGH])
    assert not ground_rules_ok([FLAT] * 20 + [LOW, HIGH])
    assert not ground_rules_ok([FLAT] * 19 + [LOW])
    assert not ground_rules_ok([FLAT] * 20 + [4])


# -- crash-region oracle -----------------------------------------------------


def test_crash_region_oracle_on_stubs():
    assert crash_region_oracle("stub-safe", 4) == set()
    cells = crash_region_oracle("stub-crash", 3)
    assert cells == {(i, j) for i in range(3) for j in range(3)}


def test_crash_region_oracle_limits():
    with pytest.raises(ResolutionTooLarge):
        crash_region_oracle("navi2d", 11)
    with pytest.raises(ValueError):
        crash_region_oracle("stub-safe", [2, 2, 2])
