"""Trusted-time protocol: node state machine, calibration, and the Time Authority.

A node serves timestamps only while in the OK state.  Interrupts taint the
node's view of its tick counter; peers or the Time Authority are used to
untaint it.  Speed calibration regresses counter deltas against requested
authority sleeps, so the slope is immune to any constant network delay.
"""
from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .clocks import TscModel
from .engine import NS_PER_MS, NS_PER_S

TIMESTAMP_EPSILON_NS = 1  # smallest forced increment for monotonicity

TIME_AUTHORITY_ID = 0


class MessageKind(enum.IntEnum):
    TA_SLEEP_REQUEST = 1
    TA_SLEEP_RESPONSE = 2
    TA_REF_REQUEST = 3
    TA_REF_RESPONSE = 4
    PEER_TIME_REQUEST = 5
    PEER_TIME_RESPONSE = 6

    @property
    def carries_time(self) -> bool:
        return self in (
            MessageKind.TA_SLEEP_RESPONSE,
            MessageKind.TA_REF_RESPONSE,
            MessageKind.PEER_TIME_RESPONSE,
        )


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    sender: int
    receiver: int
    nonce: int
    sleep_ns: int = 0
    payload_ns: int = 0


class NodeState(str, enum.Enum):
    FULL_CALIB = "FullCalib"
    REF_CALIB = "RefCalib"
    TAINTED = "Tainted"
    OK = "OK"


class ProtocolError(Exception):
    pass


class UnavailableError(ProtocolError):
    """Timestamp requested while the node is not in the OK state."""


class BackwardsTscError(ProtocolError):
    """Counter read moved behind the calibration anchor; signals manipulation."""


class InsufficientSamplesError(ProtocolError):
    """Fewer than two valid calibration samples."""


class SingularRegressionError(ProtocolError):
    """All valid calibration samples share one sleep value; slope is undefined."""


@dataclass
class CalibrationSample:
    sleep_ns: int
    delta_ticks: int
    valid: bool = True


@dataclass
class NodeClock:
    """Calibrated view of the local counter.

    `calibrated_ticks_per_s` is kept as an exact rational so timestamp
    arithmetic is reproducible integer math with round-toward-zero.
    """

    anchor_ref_ns: int | None = None
    anchor_tsc: int | None = None
    calibrated_ticks_per_s: Fraction | None = None
    tainted: bool = True
    last_served_ns: int = -1


def calibrate_speed(samples: list[CalibrationSample]) -> Fraction:
    """Least-squares slope of counter delta versus requested sleep, in ticks/s.

    Only valid samples enter the regression.  The intercept absorbs constant
    round-trip delay and is discarded.
    """
    points = [(s.sleep_ns, s.delta_ticks) for s in samples if s.valid]
    if len(points) < 2:
        raise InsufficientSamplesError(f"need at least 2 valid samples, have {len(points)}")
    n = len(points)
    sum_x = sum(x for x, _ in points)
    sum_y = sum(y for _, y in points)
    sum_xx = sum(x * x for x, _ in points)
    sum_xy = sum(x * y for x, y in points)
    denom = n * sum_xx - sum_x * sum_x
    if denom == 0:
        raise SingularRegressionError("all valid samples share one sleep value")
    slope_ticks_per_ns = Fraction(n * sum_xy - sum_x * sum_y, denom)
    return slope_ticks_per_ns * NS_PER_S


def estimate_now(clock: NodeClock, tsc_now: int) -> int:
    """Node's current timestamp from the anchor plus elapsed ticks.

    Integer nanoseconds, rounded toward zero.
    """
    if clock.anchor_ref_ns is None or clock.anchor_tsc is None or clock.calibrated_ticks_per_s is None:
        raise ProtocolError("clock has no calibration anchor")
    if tsc_now < clock.anchor_tsc:
        raise BackwardsTscError(f"counter {tsc_now} behind anchor {clock.anchor_tsc}")
    rate = clock.calibrated_ticks_per_s
    elapsed_ns = (tsc_now - clock.anchor_tsc) * NS_PER_S * rate.denominator // rate.numerator
    return clock.anchor_ref_ns + elapsed_ns


@dataclass(frozen=True)
class ProtocolConfig:
    calibration_pairs: int = 8
    calibration_sleeps_ns: tuple[int, ...] = (0, NS_PER_S)
    sample_retry_budget: int = 3
    peer_timeout_ns: int = 200 * NS_PER_MS
    ref_timeout_ns: int = 200 * NS_PER_MS


class NodeEnv:
    """Services a node needs from its host (the runner, or a test harness)."""

    def now(self) -> int:
        raise NotImplementedError

    def send(self, msg: ProtocolMessage) -> None:
        raise NotImplementedError

    def start_timer(self, delay_ns: int, tag: str, payload=None) -> int:
        raise NotImplementedError

    def cancel_timer(self, timer_id: int) -> None:
        raise NotImplementedError

    def rng(self) -> random.Random:
        raise NotImplementedError

    # notification hooks; hosts override what they record
    def on_transition(self, node: "Node", old: NodeState, new: NodeState) -> None:
        pass

    def on_untaint(self, node: "Node", source: int, adopted: bool,
                   new_time_ns: int, magnitude_ns: int) -> None:
        pass

    def on_ref_calibration(self, node: "Node", magnitude_ns: int | None) -> None:
        pass

    def on_speed_calibrated(self, node: "Node") -> None:
        pass


class Node:
    """One cluster member running the trusted-time state machine."""

    def __init__(
        self,
        node_id: int,
        peer_ids: list[int],
        tsc: TscModel,
        env: NodeEnv,
        config: ProtocolConfig = ProtocolConfig(),
        initial_rate: Fraction | None = None,
    ):
        self.id = node_id
        self.peers = list(peer_ids)
        self.tsc = tsc
        self.env = env
        self.config = config
        self.clock = NodeClock()
        self.aex_count = 0
        self.ta_ref_count = 0
        self._nonces = itertools.count(node_id * 1_000_000 + 1)
        # speed-calibration context
        self._slots: list[int] = []
        self._samples: list[CalibrationSample] = []
        self._slot_attempts = 0
        self._calib_nonce: int | None = None
        self._calib_sent_tsc: int | None = None
        self._calib_timer: int | None = None
        # reference-calibration context
        self._ref_nonce: int | None = None
        self._ref_timer: int | None = None
        # taint context
        self._pre_taint_time_ns: int | None = None
        self._round_nonce: int | None = None
        self._peer_timer: int | None = None
        self._frozen_belief_ns: int | None = None

        if initial_rate is not None:
            self.clock.anchor_ref_ns = 0
            self.clock.anchor_tsc = tsc.read(0)
            self.clock.calibrated_ticks_per_s = initial_rate
            self.clock.tainted = False
            self.state = NodeState.OK
        else:
            self.state = NodeState.FULL_CALIB

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self.state is NodeState.FULL_CALIB:
            self._begin_speed_calibration()

    def _transition(self, new: NodeState) -> None:
        old = self.state
        if old is new:
            return
        self.state = new
        self.env.on_transition(self, old, new)

    # -- public clock surface ------------------------------------------------

    def serve_timestamp(self) -> int:
        if self.state is not NodeState.OK:
            raise UnavailableError(f"node {self.id} is {self.state.value}")
        est = estimate_now(self.clock, self.tsc.read(self.env.now()))
        stamp = max(est, self.clock.last_served_ns + TIMESTAMP_EPSILON_NS)
        self.clock.last_served_ns = stamp
        return stamp

    def belief_ns(self) -> int | None:
        """Timestamp the node currently stands behind, or None before first anchor."""
        if self.clock.anchor_ref_ns is None:
            return None
        if self.state is NodeState.OK:
            return estimate_now(self.clock, self.tsc.read(self.env.now()))
        return self._frozen_belief_ns

    def _extrapolated_now(self) -> int | None:
        """Pre-update estimate on the stale anchor, used to size jumps."""
        if self.clock.anchor_ref_ns is None:
            return None
        try:
            return estimate_now(self.clock, self.tsc.read(self.env.now()))
        except BackwardsTscError:
            return self._frozen_belief_ns

    def _freeze_belief(self) -> None:
        try:
            self._frozen_belief_ns = self._extrapolated_now()
        except ProtocolError:
            self._frozen_belief_ns = None

    # -- interrupt handling --------------------------------------------------

    def on_aex(self) -> None:
        self.aex_count += 1
        if self.state is NodeState.FULL_CALIB:
            self._on_aex_during_full_calib()
        elif self.state is NodeState.REF_CALIB:
            self._begin_reference_calibration()  # restart the exchange
        elif self.state is NodeState.OK:
            try:
                self._pre_taint_time_ns = estimate_now(self.clock, self.tsc.read(self.env.now()))
            except BackwardsTscError:
                # counter rolled back behind the anchor: manipulation, recalibrate
                self.on_monitor_discrepancy()
                return
            self._freeze_belief()
            self.clock.tainted = True
            self._transition(NodeState.TAINTED)
            self._issue_peer_round()
        elif self.state is NodeState.TAINTED:
            self._issue_peer_round()  # re-issue with a fresh nonce

    def _on_aex_during_full_calib(self) -> None:
        if self._ref_nonce is not None:
            self._begin_reference_calibration()
            return
        if self._calib_nonce is None:
            return
        # in-flight sample is invalid; retry the slot or abandon it
        self._samples.append(CalibrationSample(self._slots[0], 0, valid=False))
        self._cancel_calib_timer()
        self._calib_nonce = None
        self._slot_attempts += 1
        if self._slot_attempts > self.config.sample_retry_budget:
            self._slots.pop(0)
            self._next_slot()
        else:
            self._send_calibration_request()

    # -- speed calibration -----------------------------------------------------

    def _begin_speed_calibration(self) -> None:
        self._cancel_calib_timer()
        self._cancel_ref_timer()
        self._ref_nonce = None
        self._slots = list(self.config.calibration_sleeps_ns) * self.config.calibration_pairs
        self._samples = []
        self._next_slot()

    def _next_slot(self) -> None:
        self._slot_attempts = 0
        if not self._slots:
            self._finish_speed_calibration()
            return
        self._send_calibration_request()

    def _send_calibration_request(self) -> None:
        sleep_ns = self._slots[0]
        self._calib_nonce = next(self._nonces)
        self._calib_sent_tsc = self.tsc.read(self.env.now())
        self.env.send(ProtocolMessage(
            MessageKind.TA_SLEEP_REQUEST, self.id, TIME_AUTHORITY_ID,
            self._calib_nonce, sleep_ns=sleep_ns,
        ))
        self._cancel_calib_timer()
        self._calib_timer = self.env.start_timer(
            sleep_ns + self.config.ref_timeout_ns, "calib_timeout", self._calib_nonce)

    def _on_sleep_response(self, msg: ProtocolMessage) -> None:
        if self.state is not NodeState.FULL_CALIB or msg.nonce != self._calib_nonce:
            return  # stale response from an invalidated round-trip
        self._cancel_calib_timer()
        delta = self.tsc.read(self.env.now()) - self._calib_sent_tsc
        self._samples.append(CalibrationSample(self._slots[0], delta, valid=True))
        self._calib_nonce = None
        self._slots.pop(0)
        self._next_slot()

    def _on_calib_timeout(self, nonce: int) -> None:
        if self.state is not NodeState.FULL_CALIB or nonce != self._calib_nonce:
            return
        self._calib_timer = None
        self._samples.append(CalibrationSample(self._slots[0], 0, valid=False))
        self._calib_nonce = None
        self._slot_attempts += 1
        if self._slot_attempts > self.config.sample_retry_budget:
            self._slots.pop(0)
            self._next_slot()
        else:
            self._send_calibration_request()

    def _finish_speed_calibration(self) -> None:
        try:
            rate = calibrate_speed(self._samples)
        except (InsufficientSamplesError, SingularRegressionError):
            self._begin_speed_calibration()  # whole batch was unusable
            return
        self.clock.calibrated_ticks_per_s = rate
        self.env.on_speed_calibrated(self)
        self._begin_reference_calibration()

    # -- reference calibration ---------------------------------------------------

    def _begin_reference_calibration(self) -> None:
        self._cancel_ref_timer()
        self._ref_nonce = next(self._nonces)
        self.env.send(ProtocolMessage(
            MessageKind.TA_REF_REQUEST, self.id, TIME_AUTHORITY_ID, self._ref_nonce))
        self._ref_timer = self.env.start_timer(
            self._perceived_delay_ns(self.config.ref_timeout_ns), "ref_timeout", self._ref_nonce)

    def _on_ref_response(self, msg: ProtocolMessage) -> None:
        if self._ref_nonce is None or msg.nonce != self._ref_nonce:
            return
        if self.state not in (NodeState.FULL_CALIB, NodeState.REF_CALIB):
            return
        self._cancel_ref_timer()
        self._ref_nonce = None
        magnitude = None
        previous = self._extrapolated_now()
        if previous is not None:
            magnitude = msg.payload_ns - previous
        # authority time adopted as-is; the one-way delay becomes clock offset
        self.clock.anchor_ref_ns = msg.payload_ns
        self.clock.anchor_tsc = self.tsc.read(self.env.now())
        self.clock.tainted = False
        self.ta_ref_count += 1
        self.env.on_ref_calibration(self, magnitude)
        self._transition(NodeState.OK)

    def _on_ref_timeout(self, nonce: int) -> None:
        if nonce != self._ref_nonce or self.state not in (NodeState.FULL_CALIB, NodeState.REF_CALIB):
            return
        self._ref_timer = None
        self._begin_reference_calibration()

    # -- taint and peer untainting --------------------------------------------

    def _issue_peer_round(self) -> None:
        self._round_nonce = next(self._nonces)
        order = list(self.peers)
        self.env.rng().shuffle(order)
        for peer in order:
            self.env.send(ProtocolMessage(
                MessageKind.PEER_TIME_REQUEST, self.id, peer, self._round_nonce))
        if self._peer_timer is not None:
            self.env.cancel_timer(self._peer_timer)
        self._peer_timer = self.env.start_timer(
            self._perceived_delay_ns(self.config.peer_timeout_ns), "peer_timeout", self._round_nonce)

    def _on_peer_request(self, msg: ProtocolMessage) -> None:
        if self.state is not NodeState.OK:
            return  # tainted or calibrating nodes stay silent
        now_ns = estimate_now(self.clock, self.tsc.read(self.env.now()))
        self.env.send(ProtocolMessage(
            MessageKind.PEER_TIME_RESPONSE, self.id, msg.sender, msg.nonce, payload_ns=now_ns))

    def _on_peer_response(self, msg: ProtocolMessage) -> None:
        if self.state is not NodeState.TAINTED or msg.nonce != self._round_nonce:
            return
        local = self._pre_taint_time_ns
        incoming = msg.payload_ns
        adopted = incoming > local
        new_time = incoming if adopted else local + TIMESTAMP_EPSILON_NS
        previous = self._extrapolated_now()
        magnitude = new_time - previous if previous is not None else 0
        self.clock.anchor_ref_ns = new_time
        self.clock.anchor_tsc = self.tsc.read(self.env.now())
        self.clock.tainted = False
        if self._peer_timer is not None:
            self.env.cancel_timer(self._peer_timer)
            self._peer_timer = None
        self._round_nonce = None
        self.env.on_untaint(self, msg.sender, adopted, new_time, magnitude)
        self._transition(NodeState.OK)

    def _on_peer_timeout(self, nonce: int) -> None:
        if self.state is not NodeState.TAINTED or nonce != self._round_nonce:
            return
        self._peer_timer = None
        self._round_nonce = None
        self._transition(NodeState.REF_CALIB)
        self._begin_reference_calibration()

    # -- monitor escalation -----------------------------------------------------

    def on_monitor_discrepancy(self) -> None:
        """Counter manipulation detected: drop everything and recalibrate."""
        if self.state is NodeState.OK:
            self._freeze_belief()
        self._cancel_calib_timer()
        self._cancel_ref_timer()
        if self._peer_timer is not None:
            self.env.cancel_timer(self._peer_timer)
            self._peer_timer = None
        self._round_nonce = None
        self.clock.tainted = True
        self._transition(NodeState.FULL_CALIB)
        self._begin_speed_calibration()

    # -- dispatch ---------------------------------------------------------------

    def on_message(self, msg: ProtocolMessage) -> None:
        if msg.kind is MessageKind.TA_SLEEP_RESPONSE:
            self._on_sleep_response(msg)
        elif msg.kind is MessageKind.TA_REF_RESPONSE:
            self._on_ref_response(msg)
        elif msg.kind is MessageKind.PEER_TIME_REQUEST:
            self._on_peer_request(msg)
        elif msg.kind is MessageKind.PEER_TIME_RESPONSE:
            self._on_peer_response(msg)

    def on_timer(self, tag: str, payload) -> None:
        if tag == "peer_timeout":
            self._on_peer_timeout(payload)
        elif tag == "ref_timeout":
            self._on_ref_timeout(payload)
        elif tag == "calib_timeout":
            self._on_calib_timeout(payload)

    # -- helpers ------------------------------------------------------------------

    def _perceived_delay_ns(self, node_ns: int) -> int:
        """Convert a node-perceived duration to reference time via the local clock."""
        rate = self.clock.calibrated_ticks_per_s
        if rate is None:
            return node_ns
        ticks = rate * node_ns / NS_PER_S
        num = ticks.numerator * self.tsc.scale.denominator * NS_PER_S
        den = ticks.denominator * self.tsc.frequency * self.tsc.scale.numerator
        return -(-num // den)

    def _cancel_calib_timer(self) -> None:
        if self._calib_timer is not None:
            self.env.cancel_timer(self._calib_timer)
            self._calib_timer = None

    def _cancel_ref_timer(self) -> None:
        if self._ref_timer is not None:
            self.env.cancel_timer(self._ref_timer)
            self._ref_timer = None


class TimeAuthority:
    """Reference clock service: replies to sleep probes and time requests."""

    def __init__(self, env: NodeEnv, max_sleep_ns: int = 10 * NS_PER_S):
        self.id = TIME_AUTHORITY_ID
        self.env = env
        self.max_sleep_ns = max_sleep_ns
        self.rejected_count = 0

    def on_message(self, msg: ProtocolMessage) -> None:
        if msg.kind is MessageKind.TA_SLEEP_REQUEST:
            if not 0 <= msg.sleep_ns <= self.max_sleep_ns:
                self.rejected_count += 1
                return
            self.env.start_timer(msg.sleep_ns, "ta_sleep", (msg.sender, msg.nonce, msg.sleep_ns))
        elif msg.kind is MessageKind.TA_REF_REQUEST:
            self.env.send(ProtocolMessage(
                MessageKind.TA_REF_RESPONSE, self.id, msg.sender, msg.nonce,
                payload_ns=self.env.now()))

    def on_timer(self, tag: str, payload) -> None:
        if tag != "ta_sleep":
            return
        sender, nonce, sleep_ns = payload
        self.env.send(ProtocolMessage(
            MessageKind.TA_SLEEP_RESPONSE, self.id, sender, nonce,
            sleep_ns=sleep_ns, payload_ns=self.env.now()))
