"""Attacker capabilities: calibration-delay hooks, interrupt shaping, counter edits.

Every policy is local to the compromised node: hooks attach only to that
node's authority link, interrupt overrides replace only that node's schedule,
and counter edits touch only that node's hardware model.  Peer-to-peer
traffic is never interposed.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from fractions import Fraction

from .clocks import AexSchedule, TscModel, exact_fraction
from .engine import Constant, NS_PER_MS
from .protocol import MessageKind, ProtocolMessage
from .transport import Hook, HookAction, MessageMetadata, SleepEstimator


class AttackError(Exception):
    pass


class AttackKind(str, enum.Enum):
    NONE = "none"
    F_PLUS = "f_plus"
    F_MINUS = "f_minus"
    AEX_SUPPRESS = "aex_suppress"
    AEX_FLOOD = "aex_flood"
    TSC_OFFSET = "tsc_offset"
    TSC_SCALE = "tsc_scale"


@dataclass(frozen=True)
class AttackPolicy:
    kind: AttackKind = AttackKind.NONE
    added_delay_ns: int = 100 * NS_PER_MS
    sleep_threshold_ns: int = 500 * NS_PER_MS
    classifier_accuracy: float = 1.0
    offset_ticks: int = 0
    scale: float | str = 1.0
    flood_interval_ns: int = 10 * NS_PER_MS
    start_ns: int = 0

    def __post_init__(self):
        if not 0.0 <= self.classifier_accuracy <= 1.0:
            raise AttackError("classifier accuracy must be in [0, 1]")
        if self.kind is AttackKind.TSC_SCALE and exact_fraction(self.scale) <= 0:
            raise AttackError("counter scale must be positive")

    @property
    def delays_calibration(self) -> bool:
        return self.kind in (AttackKind.F_PLUS, AttackKind.F_MINUS)

    @property
    def edits_counter(self) -> bool:
        return self.kind in (AttackKind.TSC_OFFSET, AttackKind.TSC_SCALE)

    @property
    def shapes_interrupts(self) -> bool:
        return self.kind in (AttackKind.AEX_SUPPRESS, AttackKind.AEX_FLOOD)


def sleep_classifier(policy: AttackPolicy, rng: random.Random) -> SleepEstimator:
    """Framework oracle guessing the sleep behind an authority response.

    With probability `classifier_accuracy` the true value is recovered;
    otherwise the attacker cannot classify the message and abstains (None).
    Non-calibration traffic is never classified.
    """

    def estimate(msg: ProtocolMessage) -> int | None:
        if msg.kind is not MessageKind.TA_SLEEP_RESPONSE:
            return None
        if policy.classifier_accuracy >= 1.0 or rng.random() < policy.classifier_accuracy:
            return msg.sleep_ns
        return None

    return estimate


def calibration_delay_hook(policy: AttackPolicy) -> Hook:
    """Delay authority sleep responses on one side of the threshold.

    f_plus delays long-sleep responses, inflating the calibrated tick rate;
    f_minus delays short-sleep responses, deflating it.
    """
    if not policy.delays_calibration:
        raise AttackError(f"{policy.kind.value} does not use a delay hook")

    def hook(metadata: MessageMetadata, estimated_sleep_ns: int | None) -> HookAction:
        if metadata.send_time_ns < policy.start_ns or estimated_sleep_ns is None:
            return HookAction.passthrough()
        if policy.kind is AttackKind.F_PLUS and estimated_sleep_ns >= policy.sleep_threshold_ns:
            return HookAction.delayed(policy.added_delay_ns)
        if policy.kind is AttackKind.F_MINUS and estimated_sleep_ns < policy.sleep_threshold_ns:
            return HookAction.delayed(policy.added_delay_ns)
        return HookAction.passthrough()

    return hook


def interrupt_override(policy: AttackPolicy) -> AexSchedule:
    """Replacement interrupt schedule for the compromised node."""
    if policy.kind is AttackKind.AEX_SUPPRESS:
        return AexSchedule.none()
    if policy.kind is AttackKind.AEX_FLOOD:
        return AexSchedule.custom(Constant(policy.flood_interval_ns))
    raise AttackError(f"{policy.kind.value} does not shape interrupts")


def apply_counter_edit(policy: AttackPolicy, model: TscModel) -> None:
    """Mutate the node's counter model; callers apply this at an event boundary."""
    if not policy.edits_counter:
        raise AttackError(f"{policy.kind.value} does not edit the counter")
    if policy.kind is AttackKind.TSC_OFFSET:
        model.offset += policy.offset_ticks
    else:
        scale = exact_fraction(policy.scale)
        if scale <= 0:
            raise AttackError("counter scale must be positive")
        model.scale = scale


def ensure_compromised(policy: AttackPolicy | None, node_id: int, operation: str) -> None:
    if policy is None or policy.kind is AttackKind.NONE:
        raise AttackError(f"cannot apply {operation} to honest node {node_id}")
