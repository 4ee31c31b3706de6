"""Environment and crash-predicate registries."""
from __future__ import annotations

from typing import Callable, Dict, Type

import numpy as np

from ..mdp import Environment

ENVIRONMENTS: Dict[str, Type[Environment]] = {}
CRASH_PREDICATES: Dict[str, Callable[[np.ndarray], bool]] = {}


def register_env(name: str):
    def deco(cls):
        ENVIRONMENTS[name] = cls
        return cls

    return deco


def register_crash_predicate(name: str):
    def deco(fn):
        CRASH_PREDICATES[name] = fn
        return fn

    return deco


def make_env(name: str, **params) -> Environment:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        known = ", ".join(sorted(ENVIRONMENTS))
        raise KeyError(f"unknown environment {name!r} (known: {known})") from None
    return cls(**params)
