"""Reference adapter server: exposes a built-in environment and its policy over the protocol.

Run on stdio (one session, ends at EOF)::

    python -m curefuzz.adapter.server --env navi2d

or on TCP (sessions served one after another)::

    python -m curefuzz.adapter.server --env encounter --listen 127.0.0.1:7700
"""
from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from typing import BinaryIO, Callable, Dict, Optional

import numpy as np

from ..envs import make_env
from ..mdp import AgentFailure, Environment, as_state
from .protocol import (
    AGENT_FAILURE,
    BAD_REQUEST,
    ILLEGAL_INITIAL,
    INITIAL_CRASH,
    PROTOCOL_VERSION,
    ProtocolViolation,
    decode,
    encode,
    hello,
    spec_message,
)

log = logging.getLogger(__name__)


class Session:
    """Protocol state machine for one connection. ``write`` takes one encoded line."""

    def __init__(self, env: Environment, write: Callable[[bytes], None], agent=None):
        self.env = env
        self.agent = agent if agent is not None else env.make_agent()
        self.write = write
        self.greeted = False

    def send(self, msg: Dict) -> None:
        self.write(encode(msg))

    def error(self, code: str, message: str, episode=None) -> None:
        msg = {"kind": "error", "code": code, "message": message}
        if episode is not None:
            msg["episode"] = episode
        self.send(msg)

    def handle_line(self, line: bytes) -> None:
        if not line.strip():
            return
        try:
            msg = decode(line)
        except ProtocolViolation as exc:
            self.error(BAD_REQUEST, str(exc))
            return
        kind = msg["kind"]
        if kind == "hello":
            if msg.get("protocol_version") != PROTOCOL_VERSION:
                self.error(BAD_REQUEST, f"unsupported protocol_version {msg.get('protocol_version')!r}")
                return
            self.greeted = True
            self.send(hello())
            self.send(spec_message(self.env.spec))
        elif kind == "reset":
            if not self.greeted:
                self.error(BAD_REQUEST, "reset before hello")
                return
            self.episode(msg)
        else:
            self.error(BAD_REQUEST, f"clients may not send {kind!r}")

    def episode(self, msg: Dict) -> None:
        ep = msg.get("episode")
        env = self.env
        try:
            s0 = as_state(msg.get("initial"), env.spec.state_dim)
            rng_seed = int(msg.get("rng_seed", 0))
            max_step = int(msg.get("max_step", env.spec.max_step))
        except (TypeError, ValueError) as exc:
            self.error(BAD_REQUEST, f"bad reset: {exc}", ep)
            return
        if not env.spec.legal_space.contains(s0):
            self.error(ILLEGAL_INITIAL, "initial state outside the legal space", ep)
            return
        if env.is_crash(s0):
            self.error(INITIAL_CRASH, "initial state already crashes", ep)
            return
        self.send({"kind": "state", "episode": ep, "state": s0.tolist()})
        n = 1
        crashed = False
        total = 0.0
        try:
            for s, r, crashed, done in env.iter_steps(self.agent, s0, max_step, rng_seed):
                n += 1
                total += r
                self.send(
                    {"kind": "step_result", "episode": ep, "state": s.tolist(), "reward": r, "done": done, "crashed": crashed}
                )
        except AgentFailure as exc:
            self.error(AGENT_FAILURE, str(exc), ep)
            return
        self.send({"kind": "episode_end", "episode": ep, "steps": n, "crashed": crashed, "cumulative_reward": total})


def serve_stream(env: Environment, rfile: BinaryIO, write: Callable[[bytes], None]) -> None:
    session = Session(env, write)
    for line in rfile:
        session.handle_line(line.rstrip(b"\r\n"))


def serve_stdio(env: Environment) -> None:
    out = sys.stdout.buffer

    def write(data: bytes) -> None:
        out.write(data)
        out.flush()

    serve_stream(env, sys.stdin.buffer, write)


def serve_tcp(env: Environment, host: str, port: int, max_sessions: Optional[int] = None, ready=None) -> None:
    with socket.create_server((host, port)) as srv:
        if ready is not None:
            ready(srv.getsockname()[1])
        served = 0
        while max_sessions is None or served < max_sessions:
            conn, addr = srv.accept()
            log.info("session from %s", addr)
            with conn, conn.makefile("rb") as rfile:
                try:
                    serve_stream(env, rfile, conn.sendall)
                except (BrokenPipeError, ConnectionResetError):
                    log.info("client %s went away", addr)
            served += 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="curefuzz-adapter", description=__doc__.splitlines()[0])
    ap.add_argument("--env", required=True)
    ap.add_argument("--params", default="{}", help="JSON object of environment constructor arguments")
    ap.add_argument("--listen", metavar="HOST:PORT", help="serve TCP instead of stdio")
    args = ap.parse_args(argv)
    env = make_env(args.env, **json.loads(args.params))
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        serve_tcp(env, host or "127.0.0.1", int(port))
    else:
        serve_stdio(env)
    return 0


if __name__ == "__main__":
    sys.exit(main())
