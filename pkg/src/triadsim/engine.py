"""Deterministic discrete-event core: reference clock, named RNG streams, ordered dispatch.

Reference time is an integer nanosecond count starting at zero.  Every run is a
pure function of the configuration: the event queue orders by (due, sequence)
and every random draw comes from a named stream whose seed is derived from the
master seed and the stream name, never from creation order.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000
NS_PER_MIN = 60 * NS_PER_S
NS_PER_HOUR = 3_600 * NS_PER_S


class SimulationError(Exception):
    """Base class for simulator misuse."""


class SchedulingError(SimulationError):
    """An event was scheduled before the current reference time."""


class UnknownStreamError(SimulationError):
    """A random draw was requested from a stream that was never registered."""


# ---------------------------------------------------------------------------
# duration distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value_ns: int

    def sample(self, rng: random.Random) -> int:
        return self.value_ns


@dataclass(frozen=True)
class Uniform:
    low_ns: int
    high_ns: int

    def sample(self, rng: random.Random) -> int:
        return rng.randint(self.low_ns, self.high_ns)


@dataclass(frozen=True)
class Choice:
    """Discrete distribution over fixed durations, optionally weighted."""

    values_ns: tuple[int, ...]
    weights: tuple[float, ...] | None = None

    def sample(self, rng: random.Random) -> int:
        if self.weights is None:
            return rng.choice(self.values_ns)
        return rng.choices(self.values_ns, weights=self.weights, k=1)[0]


@dataclass(frozen=True)
class Exponential:
    mean_ns: int

    def sample(self, rng: random.Random) -> int:
        return int(rng.expovariate(1.0 / self.mean_ns))


Distribution = Constant | Uniform | Choice | Exponential


# ---------------------------------------------------------------------------
# named random streams
# ---------------------------------------------------------------------------

class RngStreams:
    """Independent per-purpose random streams split from one master seed.

    Stream seeds depend only on (master_seed, name), so draws on one stream
    never perturb another and registration order is irrelevant.
    """

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._streams: dict[str, random.Random] = {}

    def register(self, name: str) -> random.Random:
        if name not in self._streams:
            digest = hashlib.sha256(f"{self.master_seed}:{name}".encode()).digest()
            self._streams[name] = random.Random(int.from_bytes(digest[:16], "big"))
        return self._streams[name]

    def get(self, name: str) -> random.Random:
        try:
            return self._streams[name]
        except KeyError:
            raise UnknownStreamError(f"stream {name!r} was never registered") from None

    def sample_duration(self, dist: Distribution, stream: str) -> int:
        value = dist.sample(self.get(stream))
        return value if value > 0 else 0


# ---------------------------------------------------------------------------
# event queue and engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    due: int
    seq: int
    target: str
    kind: str
    data: Any = None


Handler = Callable[[Event], None]


class Engine:
    """Single-threaded event loop over integer-nanosecond reference time.

    Events with equal due times dispatch in ascending sequence number, which
    makes the ordering a total order and runs byte-reproducible.
    """

    def __init__(self, seed: int):
        self.now: int = 0
        self.streams = RngStreams(seed)
        self._seq = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._cancelled: set[int] = set()
        self._handlers: dict[str, Handler] = {}
        self.log: list[Event] = []

    def register(self, target: str, handler: Handler) -> None:
        self._handlers[target] = handler

    def schedule(self, due: int, target: str, kind: str, data: Any = None) -> int:
        if due < self.now:
            raise SchedulingError(f"due {due} is before current time {self.now}")
        self._seq += 1
        event = Event(due, self._seq, target, kind, data)
        heapq.heappush(self._queue, (due, self._seq, event))
        return self._seq

    def schedule_after(self, delay_ns: int, target: str, kind: str, data: Any = None) -> int:
        return self.schedule(self.now + delay_ns, target, kind, data)

    def cancel(self, event_id: int) -> None:
        self._cancelled.add(event_id)

    def run_until(self, horizon_ns: int) -> list[Event]:
        """Dispatch every due event up to and including the horizon.

        Time always advances to the horizon, even if the queue drains early.
        """
        while self._queue and self._queue[0][0] <= horizon_ns:
            due, seq, event = heapq.heappop(self._queue)
            if seq in self._cancelled:
                self._cancelled.discard(seq)
                continue
            self.now = due
            try:
                handler = self._handlers[event.target]
            except KeyError:
                raise SimulationError(f"no handler registered for target {event.target!r}") from None
            self.log.append(event)
            handler(event)
        if horizon_ns > self.now:
            self.now = horizon_ns
        return self.log

    def trace_bytes(self) -> bytes:
        lines = [f"{e.due}|{e.seq}|{e.target}|{e.kind}" for e in self.log]
        return ("\n".join(lines) + "\n").encode()
