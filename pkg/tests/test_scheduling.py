import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from curefuzz.envs import make_env
from curefuzz.mdp import run_episode
from curefuzz.scheduling import (
    Corpus,
    CorpusEntry,
    EmptyCorpus,
    EnergyParams,
    admit,
    robustness,
    seed_energy,
    select_seed,
)

from oracles import energy_oracle, navi_robustness

finite = st.floats(-60, 60, allow_nan=False)


def entry(r=0.0, i=0.0, rp=0.0, seed=None, parent=None):
    s = np.array([r, i, rp]) if seed is None else np.asarray(seed, dtype=float)
    return CorpusEntry(s, r, i, rp, parent_id=parent)


def test_energy_trivial_values():
    assert seed_energy(0.0, 0.0, 0.0, EnergyParams(3.0, -2.0, 7.0)) == 2.0
    assert seed_energy(5.0, 9.0, 4.0, EnergyParams(0.0, 0.0, 0.0)) == 2.0


def test_energy_matches_high_precision_value():
    got = seed_energy(1.5, 0.2, 0.3, EnergyParams())
    assert got == pytest.approx(float(energy_oracle(1.5, 0.2, 0.3, 1, 1, 1)), rel=1e-15)
    # Frozen oracle value of e^-1.5 + e^0.2 + 0.3.
    assert got == pytest.approx(1.7445329183085996, rel=1e-15)


def test_energy_clamps_exponents():
    e = seed_energy(-1e6, 1e6, 0.0, EnergyParams())
    assert e == pytest.approx(2 * math.exp(50), rel=1e-15)
    assert seed_energy(1e6, -1e6, 0.0, EnergyParams()) == pytest.approx(2 * math.exp(-50), rel=1e-15)


def test_energy_params_must_be_finite():
    with pytest.raises(ValueError):
        EnergyParams(math.inf, 1.0, 1.0)


@given(r=finite, i=st.floats(0, 60), rp=st.floats(0, 100), a=st.floats(0.01, 3), b=st.floats(0.01, 3), g=st.floats(0.01, 3))
def test_energy_monotonicity(r, i, rp, a, b, g):
    # Keep the three terms within a few orders of magnitude so a step of 0.5 is not absorbed by rounding.
    assume(abs(a * r) <= 10 and b * i <= 10)
    p = EnergyParams(a, b, g)
    e = seed_energy(r, i, rp, p)
    assert seed_energy(r + 0.5, i, rp, p) < e
    assert seed_energy(r, i + 0.5, rp, p) > e
    assert seed_energy(r, i, rp + 0.5, p) > e


def test_select_seed_on_empty_corpus():
    with pytest.raises(EmptyCorpus):
        select_seed(Corpus(), np.random.default_rng(0))


def test_select_seed_does_not_remove():
    c = Corpus()
    c.insert(entry(seed=[1.0]))
    for _ in range(5):
        assert select_seed(c, np.random.default_rng(1)) == 0
    assert len(c) == 1


def _frequencies(c, draws, seed=0):
    rng = np.random.default_rng(seed)
    ids = c.ids()
    counts = dict.fromkeys(ids, 0)
    for _ in range(draws):
        counts[select_seed(c, rng)] += 1
    return np.array([counts[i] / draws for i in ids]), c.energies() / c.energies().sum()


def test_selection_uniform_and_weighted():
    c = Corpus(EnergyParams(1.0, 0.0, 1.0))
    # exp(-r) + 1 with r = -ln(k - 1) gives energy k.
    c.insert(entry(r=-math.log(0.5), seed=[0.0]))  # energy 1.5
    c.insert(entry(r=-math.log(3.5), seed=[1.0]))  # energy 4.5
    freq, want = _frequencies(c, 40000)
    assert want == pytest.approx([0.25, 0.75])
    assert np.all(np.abs(freq - want) < 0.01)
    u = Corpus()
    for k in range(4):
        u.insert(entry(seed=[float(k)]))
    freq, want = _frequencies(u, 40000)
    assert np.allclose(want, 0.25) and np.all(np.abs(freq - 0.25) < 0.01)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_selection_argmax_matches_energy(seed):
    rng = np.random.default_rng(seed)
    c = Corpus()
    for k in range(6):
        c.insert(entry(r=float(rng.uniform(-1, 1)), i=float(rng.uniform(0, 1)), rp=float(rng.uniform(0, 1)), seed=[k]))
    freq, want = _frequencies(c, 100_000, seed)
    assert np.argmax(freq) == np.argmax(want)


def test_admission_rules():
    c = Corpus()
    pid = c.insert(entry(r=1.0, seed=[0.0]))
    eps = 1e-9
    assert admit(c, entry(r=2.0, i=0.5 + eps, seed=[1.0], parent=pid), novelty_threshold=0.5)
    assert not admit(c, entry(r=1.0, i=0.1, seed=[2.0], parent=pid), novelty_threshold=0.5)
    assert admit(c, entry(r=0.9, i=0.1, seed=[3.0], parent=pid), novelty_threshold=0.5)
    assert len(c) == 3


def test_admission_ignores_duplicate_seeds():
    c = Corpus()
    pid = c.insert(entry(r=1.0, seed=[0.0]))
    assert not admit(c, entry(r=0.0, seed=[0.0], parent=pid), novelty_threshold=0.0)
    assert len(c) == 1


def test_eviction_removes_minimum_energy():
    c = Corpus(max_size=3)
    for k, r in enumerate([0.0, 2.0, -1.0]):
        c.insert(entry(r=r, seed=[float(k)]))
    c.insert(entry(r=1.0, seed=[9.0]))
    rewards = sorted(e.cumulative_reward for e in c)
    assert rewards == [-1.0, 0.0, 1.0]
    assert c.evictions == 1


def test_negative_robustness_rejected():
    with pytest.raises(ValueError):
        Corpus().insert(entry(rp=-1.0))


def test_corpus_conservation_and_energy_consistency():
    rng = np.random.default_rng(5)
    p = EnergyParams(1.3, 0.7, 0.4)
    c = Corpus(p, max_size=300)
    for k in range(10_000):
        r, i, rp = rng.uniform(-3, 3), rng.uniform(0, 5), rng.uniform(0, 2)
        c.insert(CorpusEntry(np.array([float(k)]), r, i, rp))
        if k % 97 == 0 and len(c) > 1:
            victim = c.ids()[int(rng.integers(len(c)))]
            if k % 2:
                c.evict(victim)
            else:
                c.update_entry(victim, intrinsic=float(rng.uniform(0, 5)))
    assert c.total_energy == pytest.approx(c.recompute_total(), rel=1e-9)
    for e in c:
        assert e.energy == pytest.approx(seed_energy(e.cumulative_reward, e.intrinsic, e.robustness, p), rel=1e-12)
    assert len(c) == 300


def test_snapshot_round_trip_resumes_selection():
    rng = np.random.default_rng(2)
    c = Corpus(EnergyParams(0.5, 2.0, 1.0), max_size=20)
    for k in range(40):
        c.insert(CorpusEntry(rng.uniform(-1, 1, 3), rng.uniform(-1, 1), rng.uniform(0, 1), rng.uniform(0, 1), parent_id=k or None))
    doc = json.loads(json.dumps(c.to_dict()))
    assert doc["version"] == 1
    back = Corpus.from_dict(doc)
    assert back.ids() == c.ids() and back.evictions == c.evictions
    assert np.array_equal(back.energies(), c.energies())
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    assert [select_seed(c, a) for _ in range(50)] == [select_seed(back, b) for _ in range(50)]
    nxt = CorpusEntry(np.zeros(3), 0.0, 0.0, 0.0)
    assert back.insert(nxt) == c.insert(CorpusEntry(np.zeros(3), 0.0, 0.0, 0.0))


def test_snapshot_version_checked():
    d = Corpus().to_dict()
    d["version"] = 2
    with pytest.raises(ValueError):
        Corpus.from_dict(d)


# -- robustness ---------------------------------------------------------------


@pytest.mark.parametrize("mag", [0.01, 0.2])
def test_robustness_on_identity_dynamics_is_perturbation_norm(mag):
    env = make_env("stub-frozen", dim=4)
    agent = env.make_agent()
    seed = np.array([0.5, 0.3, 0.9, 0.1, 0.0])
    traj = run_episode(env, agent, seed).trajectory
    rng = np.random.default_rng(3)
    got = robustness(seed, traj, env, agent, mag, rng)
    delta = np.random.default_rng(3).uniform(-1, 1, 5) * mag * env.spec.legal_space.extent
    want = np.linalg.norm(env.spec.legal_space.clamp(seed + delta) - seed)
    assert got == pytest.approx(want, rel=0, abs=1e-9)


def test_robustness_zero_magnitude():
    env = make_env("navi2d")
    agent = env.make_agent()
    seed = env.sample_initial(np.random.default_rng(0))
    traj = run_episode(env, agent, seed, rng_seed=4).trajectory
    assert robustness(seed, traj, env, agent, 0.0, np.random.default_rng(0), 4) == 0.0


def test_robustness_folds_to_zero_when_perturbations_crash():
    # Every perturbed seed is rejected, so all retries fail.
    env = make_env("stub-frozen", dim=2)

    class Illegal(type(env)):
        def is_legal_initial(self, state):
            return False

    bad = Illegal(dim=2)
    seed = np.array([0.5, 0.5, 0.0])
    traj = run_episode(bad, bad.make_agent(), seed).trajectory
    assert robustness(seed, traj, bad, bad.make_agent(), 0.1, np.random.default_rng(0)) == 0.0


def test_robustness_matches_two_episode_oracle_on_navi2d():
    env = make_env("navi2d")
    agent = env.make_agent()
    for case in range(20):
        rng = np.random.default_rng(case)
        seed = env.sample_initial(rng)
        episode = int(rng.integers(2**63))
        traj = run_episode(env, agent, seed, rng_seed=episode).trajectory
        got = robustness(seed, traj, env, agent, 0.01, np.random.default_rng(100 + case), episode)
        want = navi_robustness(seed.tolist(), np.random.default_rng(100 + case), episode, 0.01)
        assert got == pytest.approx(want, rel=0, abs=1e-9)
