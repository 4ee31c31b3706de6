"""Run environments that live in another process behind a newline-delimited JSON protocol."""
from .channel import Channel, SocketChannel, SubprocessChannel, open_channel
from .protocol import (
    PROTOCOL_VERSION,
    AdapterError,
    MalformedSpec,
    ProtocolViolation,
    RemoteError,
    Timeout,
    VersionMismatch,
)
from .remote import RemoteEnvironment, handshake, remote_episode

__all__ = [
    "PROTOCOL_VERSION",
    "AdapterError",
    "Channel",
    "MalformedSpec",
    "ProtocolViolation",
    "RemoteEnvironment",
    "RemoteError",
    "SocketChannel",
    "SubprocessChannel",
    "Timeout",
    "VersionMismatch",
    "handshake",
    "open_channel",
    "remote_episode",
]
