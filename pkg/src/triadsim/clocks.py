"""Per-node clock hardware model: raw tick counter, interrupt schedule, monitor thread."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .engine import Choice, Constant, Distribution, NS_PER_MS, NS_PER_S

DEFAULT_TSC_FREQUENCY = 2_899_999_000  # ticks per reference second

# Interruption regimes: a three-point mix of short/medium/long gaps, and a
# quiet regime where gaps cluster around 5.4 minutes.
TRIAD_LIKE_DELAYS_NS = (10 * NS_PER_MS, 532 * NS_PER_MS, 1_590 * NS_PER_MS)
LOW_AEX_INTERVAL_NS = 324 * NS_PER_S


def exact_fraction(value) -> Fraction:
    """Convert a config value to an exact rational.

    Floats are interpreted through their decimal string so a configured 1.1
    means exactly 11/10, not the nearest binary double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot convert {value!r} to a fraction")


@dataclass
class TscModel:
    """Timestamp counter as seen by one node.

    Reads advance at frequency * scale ticks per reference second plus a fixed
    offset.  Honest hardware has scale == 1 and offset == 0; attacks mutate
    both, and mutations take effect at event boundaries only.
    """

    frequency: int = DEFAULT_TSC_FREQUENCY
    offset: int = 0
    scale: Fraction = Fraction(1)

    def __post_init__(self):
        self.scale = exact_fraction(self.scale)
        if self.frequency <= 0:
            raise ValueError("tick frequency must be positive")
        if self.scale <= 0:
            raise ValueError("tick scale must be positive")

    def read(self, t_ns: int) -> int:
        if t_ns < 0:
            raise ValueError("reference time must be non-negative")
        num = self.frequency * self.scale.numerator * t_ns
        return num // (self.scale.denominator * NS_PER_S) + self.offset

    def duration_for_ticks(self, ticks: int) -> int:
        """Reference nanoseconds needed for the counter to advance `ticks`."""
        num = ticks * self.scale.denominator * NS_PER_S
        den = self.frequency * self.scale.numerator
        return -(-num // den)


@dataclass(frozen=True)
class AexSchedule:
    """Inter-interrupt delay model for one node.

    `correlated_broadcast` is the probability that a fired interrupt also hits
    every other node at the same instant (machine-wide events).
    """

    regime: str
    distribution: Distribution | None = None
    correlated_broadcast: float = 0.0

    @classmethod
    def triad_like(cls, correlated_broadcast: float = 0.0) -> "AexSchedule":
        return cls("triad_like", Choice(TRIAD_LIKE_DELAYS_NS), correlated_broadcast)

    @classmethod
    def low_aex(cls, correlated_broadcast: float = 0.0) -> "AexSchedule":
        return cls("low_aex", Constant(LOW_AEX_INTERVAL_NS), correlated_broadcast)

    @classmethod
    def none(cls) -> "AexSchedule":
        return cls("none", None, 0.0)

    @classmethod
    def custom(cls, distribution: Distribution, correlated_broadcast: float = 0.0) -> "AexSchedule":
        return cls("custom", distribution, correlated_broadcast)

    def next_delay(self, rng: random.Random) -> int | None:
        if self.distribution is None:
            return None
        return max(0, self.distribution.sample(rng))


@dataclass(frozen=True)
class MonitorCounter:
    """In-enclave monitor loop counting instructions per fixed tick window.

    The loop increments a register until the counter advances `window_ticks`;
    with honest hardware the count lands on `expected_count` give or take
    `noise_std`.  A count off by more than `tolerance` is a discrepancy.
    A small heavy-tail probability reproduces rare deep outliers seen on
    real hardware during warm-up.
    """

    expected_count: float = 632_182.0
    window_ticks: int = 15_000_000
    noise_std: float = 2.9
    tolerance: float = 50.0
    outlier_probability: float = 0.0
    outlier_scale: float = 40.0

    def __post_init__(self):
        if self.tolerance < 3 * self.noise_std:
            raise ValueError("tolerance must be at least 3x the count noise")
        if not 0.0 <= self.outlier_probability <= 1.0:
            raise ValueError("outlier probability must be in [0, 1]")


def honest_window_ns(counter: MonitorCounter, frequency: int) -> int:
    """Reference duration of one window on unmanipulated hardware."""
    return -(-counter.window_ticks * NS_PER_S // frequency)


def observed_count(
    counter: MonitorCounter,
    actual_window_ns: int,
    baseline_window_ns: int,
    rng: random.Random,
    expected: float | None = None,
) -> float:
    """Instruction count for a window that really lasted `actual_window_ns`.

    The count scales with the real duration of the window: a counter running
    fast closes the window early and the loop runs fewer increments.
    """
    mean = counter.expected_count if expected is None else expected
    count = mean * (actual_window_ns / baseline_window_ns)
    noise = rng.gauss(0.0, counter.noise_std)
    if counter.outlier_probability and rng.random() < counter.outlier_probability:
        noise -= abs(rng.gauss(0.0, counter.noise_std * counter.outlier_scale))
    return count + noise


def window_verdict(counter: MonitorCounter, observed: float, expected: float | None = None) -> str:
    mean = counter.expected_count if expected is None else expected
    return "discrepancy" if abs(observed - mean) > counter.tolerance else "ok"
