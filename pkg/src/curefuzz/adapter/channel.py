"""Line-oriented transports: a child process's stdio or a TCP stream."""
from __future__ import annotations

import os
import selectors
import shlex
import socket
import subprocess
import time
from typing import Any, Dict, List, Optional, Sequence, Union

from .protocol import ProtocolViolation, Timeout, decode, encode

MAX_LINE = 16 * 1024 * 1024


class Channel:
    """Framing over a byte stream. Subclasses supply ``_read(timeout)`` and ``_write``."""

    def __init__(self):
        self._buf = b""
        self.closed = False

    def _read(self, timeout: float) -> bytes:
        raise NotImplementedError

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def send(self, msg: Dict[str, Any]) -> None:
        self._write(encode(msg))

    def recv_line(self, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            if len(self._buf) > MAX_LINE:
                self._buf = b""
                raise ProtocolViolation("line exceeds the maximum message size")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(f"no complete message within {timeout:g} s")
            chunk = self._read(remaining)
            if not chunk:
                raise ProtocolViolation("remote closed the stream")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def recv(self, timeout: float) -> Dict[str, Any]:
        return decode(self.recv_line(timeout))

    def close(self) -> None:
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self.sock = sock

    @classmethod
    def connect(cls, address: str, timeout: float = 5.0) -> "SocketChannel":
        host, _, port = address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"expected host:port, got {address!r}")
        try:
            sock = socket.create_connection((host, int(port)), timeout=timeout)
        except socket.timeout:
            raise Timeout(f"could not connect to {address} within {timeout:g} s") from None
        return cls(sock)

    def _read(self, timeout: float) -> bytes:
        self.sock.settimeout(timeout)
        try:
            return self.sock.recv(65536)
        except socket.timeout:
            raise Timeout(f"no data within {timeout:g} s") from None

    def _write(self, data: bytes) -> None:
        self.sock.settimeout(None)
        self.sock.sendall(data)

    def close(self) -> None:
        if not self.closed:
            try:
                self.sock.close()
            finally:
                super().close()


class SubprocessChannel(Channel):
    """Launches ``command`` and speaks the protocol over its stdin/stdout."""

    def __init__(self, command: Union[str, Sequence[str]], env: Optional[dict] = None):
        super().__init__()
        argv: List[str] = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, env=env, bufsize=0)
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)

    def _read(self, timeout: float) -> bytes:
        if not self._sel.select(timeout):
            raise Timeout(f"no data within {timeout:g} s")
        return os.read(self.proc.stdout.fileno(), 65536)

    def _write(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except BrokenPipeError:
            raise ProtocolViolation("remote process exited") from None

    def close(self) -> None:
        if self.closed:
            return
        self._sel.close()
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=2.0)
        except (subprocess.TimeoutExpired, BrokenPipeError):
            self.proc.kill()
            self.proc.wait()
        finally:
            self.proc.stdout.close()
            super().close()


def open_channel(address: str) -> Channel:
    """``tcp://host:port`` or ``host:port`` connects; anything else is run as a command."""
    if address.startswith("tcp://"):
        return SocketChannel.connect(address[len("tcp://") :])
    host, _, port = address.rpartition(":")
    if host and port.isdigit() and " " not in address:
        return SocketChannel.connect(address)
    return SubprocessChannel(address)
