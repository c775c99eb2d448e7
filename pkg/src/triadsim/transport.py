"""Message transport: delay/jitter/loss links, interposition hooks, wire codec.

Interposition hooks model an attacker on the path.  A hook sees only message
metadata (sender, receiver, size, send time) plus whatever the framework's
sleep classifier estimated; the payload itself is opaque, which mirrors the
authenticated-encryption wire contract below.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .engine import Distribution, Engine
from .protocol import MessageKind, ProtocolMessage


class TransportError(Exception):
    pass


class ConfigurationError(TransportError):
    pass


class EncodeError(TransportError):
    pass


class DecodeError(TransportError):
    pass


# ---------------------------------------------------------------------------
# wire format
# ---------------------------------------------------------------------------

# Fixed field order: kind:u8, sender:u16, receiver:u16, nonce:u64,
# sleep_ns:u64, payload_ns:u64.  Big-endian, no padding.
_WIRE = struct.Struct(">BHHQQQ")
WIRE_SIZE = _WIRE.size
GCM_NONCE_SIZE = 12
GCM_TAG_SIZE = 16


def encode(msg: ProtocolMessage) -> bytes:
    try:
        return _WIRE.pack(int(msg.kind), msg.sender, msg.receiver,
                          msg.nonce, msg.sleep_ns, msg.payload_ns)
    except (struct.error, ValueError) as exc:
        raise EncodeError(str(exc)) from exc


def decode(data: bytes) -> ProtocolMessage:
    if len(data) != WIRE_SIZE:
        raise DecodeError(f"expected {WIRE_SIZE} bytes, got {len(data)}")
    kind, sender, receiver, nonce, sleep_ns, payload_ns = _WIRE.unpack(data)
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise DecodeError(f"unknown message kind {kind}") from None
    return ProtocolMessage(kind, sender, receiver, nonce, sleep_ns, payload_ns)


def seal(key: bytes, gcm_nonce: bytes, msg: ProtocolMessage) -> bytes:
    """Encrypt one message for a live datagram deployment.

    256-bit per-link pre-shared key, unique 96-bit nonce per message, GCM tag
    over the whole encoded message.  The simulator itself never calls this;
    it exists so the simulated hook-opacity rule matches what a real wire
    would enforce.
    """
    if len(key) != 32:
        raise EncodeError("key must be 32 bytes")
    if len(gcm_nonce) != GCM_NONCE_SIZE:
        raise EncodeError(f"nonce must be {GCM_NONCE_SIZE} bytes")
    return gcm_nonce + AESGCM(key).encrypt(gcm_nonce, encode(msg), None)


def open_sealed(key: bytes, datagram: bytes) -> ProtocolMessage:
    if len(datagram) != GCM_NONCE_SIZE + WIRE_SIZE + GCM_TAG_SIZE:
        raise DecodeError("malformed datagram length")
    gcm_nonce, ciphertext = datagram[:GCM_NONCE_SIZE], datagram[GCM_NONCE_SIZE:]
    try:
        plain = AESGCM(key).decrypt(gcm_nonce, ciphertext, None)
    except InvalidTag:
        raise DecodeError("authentication failure") from None
    return decode(plain)


# ---------------------------------------------------------------------------
# links and hooks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MessageMetadata:
    """Everything an on-path observer can see about one message."""

    sender: int
    receiver: int
    size_bytes: int
    send_time_ns: int


@dataclass(frozen=True)
class HookAction:
    kind: str  # "pass" | "drop" | "delay"
    delay_ns: int = 0

    @classmethod
    def passthrough(cls) -> "HookAction":
        return cls("pass")

    @classmethod
    def dropped(cls) -> "HookAction":
        return cls("drop")

    @classmethod
    def delayed(cls, delay_ns: int) -> "HookAction":
        return cls("delay", delay_ns)


Hook = Callable[[MessageMetadata, int | None], HookAction]
SleepEstimator = Callable[[ProtocolMessage], int | None]


@dataclass(frozen=True)
class LinkModel:
    a: int
    b: int
    base_delay_ns: int = 5_000_000
    jitter: Distribution | None = None
    loss_probability: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


class Network:
    """Schedules message deliveries over configured links.

    Hooks run in registration order before delay sampling.  They may only be
    registered by a compromised endpoint of the link, and they receive the
    metadata projection, never the message.
    """

    def __init__(self, engine: Engine, target_for: Callable[[int], str],
                 compromised: set[int] | None = None):
        self.engine = engine
        self.target_for = target_for
        self.compromised = compromised or set()
        self._links: dict[tuple[int, int], LinkModel] = {}
        self._hooks: dict[tuple[int, int], list[tuple[Hook, SleepEstimator | None]]] = {}
        self.dropped_count = 0

    def add_link(self, link: LinkModel) -> None:
        self._links[link.key] = link
        self.engine.streams.register(self._stream_name(link.key))

    def link_between(self, a: int, b: int) -> LinkModel:
        key = (a, b) if a <= b else (b, a)
        try:
            return self._links[key]
        except KeyError:
            raise ConfigurationError(f"no link between {a} and {b}") from None

    def register_hook(self, owner: int, a: int, b: int, hook: Hook,
                      estimator: SleepEstimator | None = None) -> None:
        if owner not in (a, b):
            raise ConfigurationError(f"hook owner {owner} is not an endpoint of ({a}, {b})")
        if owner not in self.compromised:
            raise ConfigurationError(f"node {owner} is not compromised; cannot interpose")
        key = self.link_between(a, b).key
        self._hooks.setdefault(key, []).append((hook, estimator))

    def send(self, msg: ProtocolMessage) -> int | None:
        """Apply hooks, loss, and delay; schedule delivery.  Returns event id."""
        link = self.link_between(msg.sender, msg.receiver)
        now = self.engine.now
        metadata = MessageMetadata(msg.sender, msg.receiver, WIRE_SIZE, now)
        extra_delay = 0
        for hook, estimator in self._hooks.get(link.key, []):
            estimated = estimator(msg) if estimator is not None else None
            action = hook(metadata, estimated)
            if action.kind == "drop":
                self.dropped_count += 1
                return None
            if action.kind == "delay":
                extra_delay += action.delay_ns
        rng = self.engine.streams.get(self._stream_name(link.key))
        if link.loss_probability and rng.random() < link.loss_probability:
            self.dropped_count += 1
            return None
        jitter = link.jitter.sample(rng) if link.jitter is not None else 0
        delay = link.base_delay_ns + max(0, jitter) + extra_delay
        return self.engine.schedule(now + delay, self.target_for(msg.receiver), "deliver", msg)

    @staticmethod
    def _stream_name(key: tuple[int, int]) -> str:
        return f"link:{key[0]}-{key[1]}"
