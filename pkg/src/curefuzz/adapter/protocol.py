"""Message framing and validation for the newline-delimited JSON adapter protocol."""
from __future__ import annotations

import json
import math
from typing import Any, Dict

import numpy as np

from ..mdp import AgentFailure, EnvSpec, LegalSpace

PROTOCOL_VERSION = 1
KINDS = frozenset({"hello", "spec", "reset", "state", "step_result", "episode_end", "error"})
HANDSHAKE_TIMEOUT = 5.0
MESSAGE_TIMEOUT = 30.0

# Error codes a remote may send; the first two map back onto mdp-core exceptions.
ILLEGAL_INITIAL = "illegal_initial"
INITIAL_CRASH = "initial_crash"
AGENT_FAILURE = "agent_failure"
BAD_REQUEST = "bad_request"


class AdapterError(AgentFailure):
    """Anything that went wrong on the far side of the adapter."""


class VersionMismatch(AdapterError):
    pass


class MalformedSpec(AdapterError):
    pass


class Timeout(AdapterError):
    pass


class ProtocolViolation(AdapterError):
    pass


class RemoteError(AdapterError):
    def __init__(self, code: str, message: str):
        super().__init__(f"remote error [{code}]: {message}")
        self.code = code
        self.detail = message


def encode(msg: Dict[str, Any]) -> bytes:
    if msg.get("kind") not in KINDS:
        raise ValueError(f"unknown message kind {msg.get('kind')!r}")
    # json emits floats with repr(), the shortest string that round-trips.
    return (json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def decode(line: bytes) -> Dict[str, Any]:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"malformed line: {exc}") from None
    if not isinstance(msg, dict) or not isinstance(msg.get("kind"), str):
        raise ProtocolViolation("message must be a JSON object with a string 'kind'")
    if msg["kind"] not in KINDS:
        raise ProtocolViolation(f"unknown message kind {msg['kind']!r}")
    return msg


def hello() -> Dict[str, Any]:
    return {"kind": "hello", "protocol_version": PROTOCOL_VERSION}


def spec_message(spec: EnvSpec) -> Dict[str, Any]:
    d = spec.to_dict()
    d["kind"] = "spec"
    return d


def _vector(msg, key, dim=None) -> np.ndarray:
    v = msg.get(key)
    if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise MalformedSpec(f"'{key}' must be a non-empty list of numbers")
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise MalformedSpec(f"'{key}' contains non-finite values")
    if dim is not None and arr.size != dim:
        raise MalformedSpec(f"'{key}' has {arr.size} entries, expected {dim}")
    return arr


def parse_spec(msg: Dict[str, Any]) -> EnvSpec:
    if msg.get("kind") != "spec":
        raise ProtocolViolation(f"expected spec, got {msg.get('kind')!r}")
    dim = msg.get("state_dim")
    max_step = msg.get("max_step")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise MalformedSpec("'state_dim' must be a positive integer")
    if not isinstance(max_step, int) or isinstance(max_step, bool) or max_step < 1:
        raise MalformedSpec("'max_step' must be a positive integer")
    lower, upper = _vector(msg, "lower", dim), _vector(msg, "upper", dim)
    if np.any(lower > upper):
        raise MalformedSpec(f"lower > upper on dimension {int(np.argmax(lower > upper))}")
    obs_lower = _vector(msg, "obs_lower", dim) if "obs_lower" in msg else lower
    obs_upper = _vector(msg, "obs_upper", dim) if "obs_upper" in msg else upper
    if np.any(obs_lower > obs_upper):
        raise MalformedSpec("obs_lower > obs_upper")
    pred = msg.get("extra_predicate_id")
    if pred is not None and not isinstance(pred, str):
        raise MalformedSpec("'extra_predicate_id' must be a string or null")
    return EnvSpec(
        name=str(msg.get("name", "remote")),
        state_dim=dim,
        legal_space=LegalSpace(lower, upper, pred),
        max_step=max_step,
        crash_predicate_id=str(msg.get("crash_predicate_id") or ""),
        obs_lower=obs_lower,
        obs_upper=obs_upper,
    )


def parse_state(msg: Dict[str, Any], key: str, dim: int) -> np.ndarray:
    v = msg.get(key)
    if not isinstance(v, list) or len(v) != dim:
        raise ProtocolViolation(f"'{key}' must be a list of {dim} numbers")
    try:
        arr = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise ProtocolViolation(f"'{key}' must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise ProtocolViolation(f"'{key}' contains non-finite values")
    return arr


def parse_number(msg: Dict[str, Any], key: str) -> float:
    v = msg.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ProtocolViolation(f"'{key}' must be a finite number")
    return float(v)


def parse_flag(msg: Dict[str, Any], key: str) -> bool:
    v = msg.get(key)
    if not isinstance(v, bool):
        raise ProtocolViolation(f"'{key}' must be a boolean")
    return v
