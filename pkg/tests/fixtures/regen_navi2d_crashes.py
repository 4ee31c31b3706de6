"""Regenerate navi2d_crashes_500.jsonl: the first 500 crash records of seeded navi2d campaigns.

    python tests/fixtures/regen_navi2d_crashes.py
"""
import json
from pathlib import Path

from curefuzz.envs import make_env
from curefuzz.fuzzer import CampaignConfig, fuzz

OUT = Path(__file__).with_name("navi2d_crashes_500.jsonl")
COUNT = 500


def main():
    env = make_env("navi2d")
    records = []
    seed = 0
    while len(records) < COUNT:
        cfg = CampaignConfig(env="navi2d", init_episodes=500, iterations=5000, rng_seed=seed)
        records += [c.to_dict() for c in fuzz(env, env.make_agent(), cfg).crashes]
        seed += 1
    OUT.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records[:COUNT]))
    print(f"{COUNT} records from {seed} campaigns written to {OUT}")


if __name__ == "__main__":
    main()
