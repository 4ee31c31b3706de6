"""Regenerate encounter_crash_region_50x50x8.json. Never edit the JSON by hand.

    python tests/fixtures/regen_encounter_crash_region.py
"""
import json
from pathlib import Path

from curefuzz.envs.oracle import ENCOUNTER_SLICE_BASE, ENCOUNTER_SLICE_DIMS, encounter_slice

RESOLUTION = (50, 50, 8)
OUT = Path(__file__).with_name("encounter_crash_region_50x50x8.json")


def main():
    cells = sorted(encounter_slice(RESOLUTION))
    doc = {
        "env": "encounter",
        "dims": list(ENCOUNTER_SLICE_DIMS),
        "base": list(ENCOUNTER_SLICE_BASE),
        "resolution": list(RESOLUTION),
        "rng_seed": 0,
        "cells": [list(c) for c in cells],
    }
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"{len(cells)} crashing cells written to {OUT}")


if __name__ == "__main__":
    main()
