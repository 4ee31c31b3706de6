"""Client side: handshake, remote episodes and an Environment backed by a channel."""
from __future__ import annotations

import logging
from typing import Container, Optional, Set

import numpy as np

from ..envs.base import CRASH_PREDICATES, ENVIRONMENTS
from ..mdp import EnvSpec, Environment, IllegalInitialState, InitialCrash, Trajectory
from .channel import Channel, open_channel
from .protocol import (
    HANDSHAKE_TIMEOUT,
    ILLEGAL_INITIAL,
    INITIAL_CRASH,
    MESSAGE_TIMEOUT,
    PROTOCOL_VERSION,
    AdapterError,
    ProtocolViolation,
    RemoteError,
    VersionMismatch,
    hello,
    parse_flag,
    parse_number,
    parse_spec,
    parse_state,
)

log = logging.getLogger(__name__)


def _raise_remote(msg) -> None:
    code = str(msg.get("code", "unknown"))
    text = str(msg.get("message", ""))
    if code == ILLEGAL_INITIAL:
        raise IllegalInitialState(f"remote: {text}")
    if code == INITIAL_CRASH:
        raise InitialCrash(f"remote: {text}")
    raise RemoteError(code, text)


def handshake(channel: Channel, timeout: float = HANDSHAKE_TIMEOUT) -> EnvSpec:
    channel.send(hello())
    msg = channel.recv(timeout)
    if msg["kind"] == "error":
        _raise_remote(msg)
    if msg["kind"] != "hello":
        raise ProtocolViolation(f"expected hello, got {msg['kind']!r}")
    if msg.get("protocol_version") != PROTOCOL_VERSION:
        raise VersionMismatch(f"remote speaks protocol {msg.get('protocol_version')!r}, we speak {PROTOCOL_VERSION}")
    msg = channel.recv(timeout)
    if msg["kind"] == "error":
        _raise_remote(msg)
    return parse_spec(msg)


def remote_episode(
    channel: Channel,
    spec: EnvSpec,
    initial: np.ndarray,
    rng_seed: int,
    max_step: int,
    episode: int = 0,
    timeout: float = MESSAGE_TIMEOUT,
    aborted: Container[int] = (),
) -> Trajectory:
    """Run one episode remotely.

    Leftover messages of episodes in ``aborted`` (ones the client gave up on)
    are discarded. A message tagged with any other foreign episode id, such as
    a step_result trailing an episode_end, is a protocol violation. Untagged
    messages are taken to belong to the current episode.
    """
    dim = spec.state_dim
    channel.send(
        {
            "kind": "reset",
            "episode": episode,
            "initial": [float(x) for x in initial],
            "rng_seed": int(rng_seed),
            "max_step": int(max_step),
        }
    )

    def next_msg():
        while True:
            msg = channel.recv(timeout)
            ep = msg.get("episode")
            if ep is not None and ep != episode:
                if ep in aborted:
                    log.debug("discarding stale %s for aborted episode %r", msg["kind"], ep)
                    continue
                raise ProtocolViolation(f"{msg['kind']} for episode {ep!r} while running episode {episode}")
            if msg["kind"] == "error":
                _raise_remote(msg)
            return msg

    msg = next_msg()
    if msg["kind"] != "state":
        raise ProtocolViolation(f"expected state echo after reset, got {msg['kind']!r}")
    states = [parse_state(msg, "state", dim)]
    total = 0.0
    crashed = False
    done = False
    while True:
        msg = next_msg()
        kind = msg["kind"]
        if kind == "step_result":
            if done:
                raise ProtocolViolation("step_result after a done step")
            states.append(parse_state(msg, "state", dim))
            total += parse_number(msg, "reward")
            crashed = parse_flag(msg, "crashed")
            done = parse_flag(msg, "done") or crashed
            if len(states) > max_step:
                raise ProtocolViolation(f"episode exceeded max_step={max_step}")
        elif kind == "episode_end":
            end_crashed = parse_flag(msg, "crashed")
            if end_crashed != crashed:
                raise ProtocolViolation("episode_end crashed flag disagrees with the step stream")
            if "steps" in msg and msg["steps"] != len(states):
                raise ProtocolViolation(f"episode_end reports {msg['steps']} states, received {len(states)}")
            return Trajectory(np.vstack(states), float(total), crashed)
        else:
            raise ProtocolViolation(f"unexpected {kind!r} during an episode")


class RemoteEnvironment(Environment):
    """An environment and agent that live on the far side of a channel.

    The fuzzer only sends initial states and receives states and rewards. Seed
    operators (sampling, mutation, perturbation) and coverage hooks run
    locally: they come from ``local`` when given, otherwise from a built-in
    environment with the same name and an identical spec, otherwise from the
    generic box operators.
    """

    is_remote = True

    def __init__(self, channel: Channel, local: Optional[Environment] = None, timeout: float = MESSAGE_TIMEOUT):
        self.channel = channel
        self.timeout = timeout
        self.spec = handshake(channel)
        self._episode = 0
        self._aborted: Set[int] = set()
        if local is None and self.spec.name in ENVIRONMENTS:
            twin = ENVIRONMENTS[self.spec.name]()
            if twin.spec == self.spec:
                local = twin
        self.local = local
        self._crash = CRASH_PREDICATES.get(self.spec.crash_predicate_id)
        if local is not None:
            self.coverage_kind = getattr(local, "coverage_kind", "grid")
            if hasattr(local, "alphabet_size"):
                self.alphabet_size = local.alphabet_size

    @classmethod
    def connect(cls, address: str, local: Optional[Environment] = None) -> "RemoteEnvironment":
        return cls(open_channel(address), local)

    def close(self) -> None:
        self.channel.close()

    def make_agent(self):
        return None  # the remote owns the agent

    def is_crash(self, state):
        if self._crash is None:
            return False  # unknown predicate: the remote judges crashes itself
        return bool(self._crash(state))

    def sample_initial(self, rng, max_tries: int = 1000):
        if self.local is not None:
            return self.local.sample_initial(rng, max_tries)
        return super().sample_initial(rng, max_tries)

    def propose_mutation(self, seed, magnitude, rng):
        if self.local is not None:
            return self.local.propose_mutation(seed, magnitude, rng)
        return super().propose_mutation(seed, magnitude, rng)

    def perturb_clamped(self, seed, magnitude, rng):
        if self.local is not None:
            return self.local.perturb_clamped(seed, magnitude, rng)
        return super().perturb_clamped(seed, magnitude, rng)

    def encountered_ground_types(self, states):
        return self.local.encountered_ground_types(states)

    def rollout(self, agent, initial, max_step, rng_seed):
        self._episode += 1
        try:
            return remote_episode(
                self.channel, self.spec, initial, rng_seed, max_step, self._episode, self.timeout, self._aborted
            )
        except AdapterError:
            # Whatever the remote still sends for this episode is noise from now on.
            self._aborted.add(self._episode)
            raise
