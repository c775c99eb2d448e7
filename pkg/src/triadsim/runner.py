"""Scenario runner: builds a cluster from a scenario and drives it to the horizon.

Record rows are taken on a fixed cadence plus at every state transition.
Timestamp serving is exercised at each sampling tick so availability and
monotonicity are observable from the outside.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from . import attacks as attacks_mod
from .attacks import AttackKind, AttackPolicy, sleep_classifier
from .clocks import (AexSchedule, MonitorCounter, TscModel, honest_window_ns,
                     observed_count, window_verdict)
from .engine import Engine, Event, NS_PER_MS
from .metrics import (Jump, MetricsSummary, Record, Transition, build_summary)
from .protocol import (Node, NodeEnv, NodeState, ProtocolConfig, ProtocolError,
                       TimeAuthority, TIME_AUTHORITY_ID)
from .scenarios import Scenario, validate
from .traceio import write_trace_dir
from .transport import LinkModel, Network


class RunError(Exception):
    pass


@dataclass
class RunResult:
    scenario: Scenario
    records: list[Record]
    transitions: list[Transition]
    jumps: list[Jump]
    serves: dict[int, list[int]]
    unavailable_serves: dict[int, int]
    aex_delay_counts: dict[int, int]
    summary: MetricsSummary
    engine_trace: bytes

    def export(self, out_dir: str | Path) -> Path:
        return write_trace_dir(out_dir, self.records, self.jumps,
                               self.aex_delay_counts, self.summary,
                               self.scenario.meta_dict())


@dataclass
class _MonitorContext:
    counter: MonitorCounter
    rate_per_ns: float          # instructions executed per reference nanosecond
    baseline_window_ns: int     # real window duration the monitor calibrated on
    baseline_scale: object      # tick scale at calibration time


class _EntityEnv(NodeEnv):
    """Adapter giving protocol entities engine time, transport, and timers."""

    def __init__(self, runner: "_Run", target: str, rng_name: str):
        self._runner = runner
        self._target = target
        self._rng_name = rng_name

    def now(self) -> int:
        return self._runner.engine.now

    def send(self, msg) -> None:
        self._runner.network.send(msg)

    def start_timer(self, delay_ns: int, tag: str, payload=None) -> int:
        return self._runner.engine.schedule_after(delay_ns, self._target, "timer", (tag, payload))

    def cancel_timer(self, timer_id: int) -> None:
        self._runner.engine.cancel(timer_id)

    def rng(self):
        return self._runner.engine.streams.get(self._rng_name)

    def on_transition(self, node, old, new) -> None:
        self._runner.note_transition(node, old, new)

    def on_untaint(self, node, source, adopted, new_time_ns, magnitude_ns) -> None:
        self._runner.note_jump(node.id, f"peer:{source}", adopted, magnitude_ns, new_time_ns)

    def on_ref_calibration(self, node, magnitude_ns) -> None:
        if magnitude_ns is not None:
            self._runner.note_jump(node.id, "ta", True, magnitude_ns,
                                   node.clock.anchor_ref_ns)

    def on_speed_calibrated(self, node) -> None:
        self._runner.rebaseline_monitor(node.id)


class _Run:
    def __init__(self, scenario: Scenario):
        problems = validate(scenario)
        if problems:
            raise RunError("invalid scenario: " + "; ".join(problems))
        self.scenario = scenario
        self.engine = Engine(scenario.seed)
        self.records: list[Record] = []
        self.transitions: list[Transition] = []
        self.jumps: list[Jump] = []
        self.serves: dict[int, list[int]] = {}
        self.unavailable: dict[int, int] = {}
        self.aex_delay_counts: dict[int, int] = {}
        self.nodes: dict[int, Node] = {}
        self.schedules: dict[int, AexSchedule] = {}
        self.monitors: dict[int, _MonitorContext] = {}
        self.last_aex_ns: dict[int, int] = {}
        self.initial_states: dict[int, str] = {}
        self._pending_aex: dict[int, int] = {}  # node id -> queued chain event id
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        s = self.scenario
        streams = self.engine.streams
        streams.register("aex:corr")

        compromised = {n.node_id for n in s.nodes
                       if n.attack is not None and n.attack.kind is not AttackKind.NONE}
        self.network = Network(self.engine, self._target_for, compromised)

        ids = [n.node_id for n in s.nodes]
        for node_id in ids:
            ta_link = s.node_ta_link
            self.network.add_link(LinkModel(TIME_AUTHORITY_ID, node_id,
                                            ta_link.base_delay_ns, ta_link.jitter,
                                            ta_link.loss_probability))
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                peer_link = s.node_node_link
                self.network.add_link(LinkModel(a, b, peer_link.base_delay_ns,
                                                peer_link.jitter, peer_link.loss_probability))

        ta_env = _EntityEnv(self, "ta", "fanout:ta")
        streams.register("fanout:ta")
        self.authority = TimeAuthority(ta_env, s.ta_max_sleep_ns)
        self.engine.register("ta", self._make_ta_handler())

        config = ProtocolConfig(
            calibration_pairs=s.calibration.pairs,
            calibration_sleeps_ns=s.calibration.sleeps_ns,
            sample_retry_budget=s.calibration.retry_budget,
            peer_timeout_ns=s.calibration.peer_timeout_ns,
            ref_timeout_ns=s.calibration.ref_timeout_ns,
        )

        for spec in s.nodes:
            node_id = spec.node_id
            for name in (f"aex:{node_id}", f"fanout:{node_id}", f"monitor:{node_id}",
                         f"classifier:{node_id}"):
                streams.register(name)
            env = _EntityEnv(self, self._target_for(node_id), f"fanout:{node_id}")
            tsc = TscModel(frequency=spec.tsc_frequency)
            peers = [other.node_id for other in s.nodes if other.node_id != node_id]
            node = Node(node_id, peers, tsc, env, config, initial_rate=spec.initial_rate)
            self.nodes[node_id] = node
            self.initial_states[node_id] = node.state.value
            self.serves[node_id] = []
            self.unavailable[node_id] = 0
            self.last_aex_ns[node_id] = -1
            self.engine.register(self._target_for(node_id), self._make_node_handler(node))

            counter = MonitorCounter()
            base_window = honest_window_ns(counter, spec.tsc_frequency)
            self.monitors[node_id] = _MonitorContext(
                counter=counter,
                rate_per_ns=counter.expected_count / base_window,
                baseline_window_ns=base_window,
                baseline_scale=tsc.scale,
            )

            schedule = self._schedule_for(spec)
            self.schedules[node_id] = schedule
            if spec.attack is not None and spec.attack.delays_calibration:
                hook = attacks_mod.calibration_delay_hook(spec.attack)
                estimator = sleep_classifier(spec.attack, streams.get(f"classifier:{node_id}"))
                self.network.register_hook(node_id, TIME_AUTHORITY_ID, node_id, hook, estimator)
            if spec.attack is not None and spec.attack.edits_counter:
                self.engine.schedule(spec.attack.start_ns, "sim", "tsc_edit", node_id)

        self.engine.register("sim", self._on_sim_event)
        for switch in s.switches:
            self.engine.schedule(switch.at_ns, "sim", "switch", switch)
        for at_ns in s.broadcast_aex_ns:
            self.engine.schedule(at_ns, "sim", "broadcast_aex", None)
        self.engine.schedule(0, "sim", "sample", None)

    def _schedule_for(self, spec) -> AexSchedule:
        if spec.attack is not None and spec.attack.shapes_interrupts:
            attacks_mod.ensure_compromised(spec.attack, spec.node_id, "interrupt shaping")
            return attacks_mod.interrupt_override(spec.attack)
        p = self.scenario.correlated_aex_probability
        if spec.aex.regime == "triad_like":
            return AexSchedule.triad_like(p)
        if spec.aex.regime == "low_aex":
            return AexSchedule.low_aex(p)
        if spec.aex.regime == "none":
            return AexSchedule.none()
        return AexSchedule.custom(spec.aex.distribution, p)

    @staticmethod
    def _target_for(entity_id: int) -> str:
        return "ta" if entity_id == TIME_AUTHORITY_ID else f"node:{entity_id}"

    def _make_node_handler(self, node: Node):
        def handler(event: Event) -> None:
            if event.kind == "deliver":
                node.on_message(event.data)
            elif event.kind == "timer":
                tag, payload = event.data
                node.on_timer(tag, payload)
            elif event.kind == "aex":
                self._deliver_aex(node)
                self._schedule_next_aex(node.id)
                self._maybe_broadcast(node.id)
        return handler

    def _make_ta_handler(self):
        def handler(event: Event) -> None:
            if event.kind == "deliver":
                self.authority.on_message(event.data)
            elif event.kind == "timer":
                tag, payload = event.data
                self.authority.on_timer(tag, payload)
        return handler

    # -- interrupts ----------------------------------------------------------

    def _deliver_aex(self, node: Node) -> None:
        self.last_aex_ns[node.id] = self.engine.now
        node.on_aex()

    def _seed_aex_chain(self, node_id: int) -> None:
        schedule = self.schedules[node_id]
        if schedule.distribution is None:
            return
        if schedule.regime == "low_aex":
            # threads start mid-cycle: uniform phase over one period
            period = schedule.distribution.value_ns
            delay = self.engine.streams.get(f"aex:{node_id}").randint(0, period)
        else:
            delay = self._draw_aex_delay(node_id)
        self._pending_aex[node_id] = self.engine.schedule_after(
            delay, self._target_for(node_id), "aex", None)

    def _schedule_next_aex(self, node_id: int) -> None:
        delay = self._draw_aex_delay(node_id)
        if delay is None:
            return
        self._pending_aex[node_id] = self.engine.schedule_after(
            delay, self._target_for(node_id), "aex", None)

    def _draw_aex_delay(self, node_id: int) -> int | None:
        schedule = self.schedules[node_id]
        if schedule.distribution is None:
            return None
        delay = schedule.next_delay(self.engine.streams.get(f"aex:{node_id}"))
        bin_ms = delay // NS_PER_MS
        self.aex_delay_counts[bin_ms] = self.aex_delay_counts.get(bin_ms, 0) + 1
        return delay

    def _maybe_broadcast(self, origin_id: int) -> None:
        p = self.schedules[origin_id].correlated_broadcast
        if p <= 0.0:
            return
        if self.engine.streams.get("aex:corr").random() < p:
            for node_id, node in sorted(self.nodes.items()):
                if node_id != origin_id:
                    self._deliver_aex(node)

    # -- runner-level events ---------------------------------------------------

    def _on_sim_event(self, event: Event) -> None:
        if event.kind == "sample":
            self._on_sample()
        elif event.kind == "switch":
            self._on_switch(event.data)
        elif event.kind == "broadcast_aex":
            for node_id, node in sorted(self.nodes.items()):
                self._deliver_aex(node)
        elif event.kind == "tsc_edit":
            self._on_tsc_edit(event.data)
        elif event.kind == "monitor_check":
            self._on_monitor_check(event.data)

    def _on_sample(self) -> None:
        for node_id, node in sorted(self.nodes.items()):
            self._record_row(node)
            try:
                self.serves[node_id].append(node.serve_timestamp())
            except ProtocolError:
                self.unavailable[node_id] += 1
        nxt = self.engine.now + self.scenario.record_interval_ns
        if nxt <= self.scenario.horizon_ns:
            self.engine.schedule(nxt, "sim", "sample", None)

    def _on_switch(self, switch) -> None:
        node_id = switch.node_id
        pending = self._pending_aex.pop(node_id, None)
        if pending is not None:
            self.engine.cancel(pending)
        p = self.scenario.correlated_aex_probability
        if switch.aex.regime == "triad_like":
            self.schedules[node_id] = AexSchedule.triad_like(p)
        elif switch.aex.regime == "low_aex":
            self.schedules[node_id] = AexSchedule.low_aex(p)
        elif switch.aex.regime == "none":
            self.schedules[node_id] = AexSchedule.none()
        else:
            self.schedules[node_id] = AexSchedule.custom(switch.aex.distribution, p)
        self._schedule_next_aex(node_id)

    # -- counter manipulation and monitor ---------------------------------------

    def _on_tsc_edit(self, node_id: int) -> None:
        node = self.nodes[node_id]
        spec = self.scenario.node(node_id)
        ctx = self.monitors[node_id]
        now = self.engine.now

        anchor = max(self.last_aex_ns[node_id], 0)
        window = ctx.baseline_window_ns
        w0 = anchor + ((now - anchor) // window) * window
        ticks_into = node.tsc.read(now) - node.tsc.read(w0) if now > w0 else 0
        old_offset = node.tsc.offset

        attacks_mod.apply_counter_edit(spec.attack, node.tsc)

        jump_ticks = node.tsc.offset - old_offset
        remaining = ctx.counter.window_ticks - ticks_into - jump_ticks
        end = now if remaining <= 0 else now + node.tsc.duration_for_ticks(remaining)
        self.engine.schedule(end, "sim", "monitor_check",
                             {"node": node_id, "window_start": w0, "actual_ns": end - w0})

    def _on_monitor_check(self, data: dict) -> None:
        node_id = data["node"]
        node = self.nodes[node_id]
        ctx = self.monitors[node_id]
        persistent = node.tsc.scale != ctx.baseline_scale

        if self.last_aex_ns[node_id] > data["window_start"]:
            # interrupted window is discarded; a persistent skew shows up in the next one
            if persistent:
                self._schedule_full_window_check(node_id)
            return

        rng = self.engine.streams.get(f"monitor:{node_id}")
        expected = ctx.rate_per_ns * ctx.baseline_window_ns
        observed = observed_count(ctx.counter, data["actual_ns"], ctx.baseline_window_ns,
                                  rng, expected=expected)
        if window_verdict(ctx.counter, observed, expected=expected) == "discrepancy":
            node.on_monitor_discrepancy()
        elif persistent:
            self._schedule_full_window_check(node_id)

    def _schedule_full_window_check(self, node_id: int) -> None:
        node = self.nodes[node_id]
        ctx = self.monitors[node_id]
        start = self.engine.now
        end = start + node.tsc.duration_for_ticks(ctx.counter.window_ticks)
        if end <= self.scenario.horizon_ns:
            self.engine.schedule(end, "sim", "monitor_check",
                                 {"node": node_id, "window_start": start,
                                  "actual_ns": end - start})

    def rebaseline_monitor(self, node_id: int) -> None:
        """After recalibration the monitor re-measures its per-window baseline."""
        node = self.nodes[node_id]
        ctx = self.monitors[node_id]
        ctx.baseline_window_ns = node.tsc.duration_for_ticks(ctx.counter.window_ticks)
        ctx.baseline_scale = node.tsc.scale

    # -- recording ----------------------------------------------------------------

    def _record_row(self, node: Node) -> None:
        try:
            belief = node.belief_ns()
        except ProtocolError:
            belief = None
        now = self.engine.now
        drift = belief - now if belief is not None else None
        self.records.append(Record(now, node.id, node.state.value, belief, drift,
                                   node.aex_count, node.ta_ref_count))

    def note_transition(self, node: Node, old: NodeState, new: NodeState) -> None:
        self.transitions.append(Transition(self.engine.now, node.id, old.value, new.value))
        self._record_row(node)

    def note_jump(self, node_id: int, source: str, adopted: bool,
                  magnitude_ns: int, new_time_ns: int) -> None:
        self.jumps.append(Jump(self.engine.now, node_id, source, adopted,
                               magnitude_ns, new_time_ns))

    # -- execution -------------------------------------------------------------------

    def execute(self) -> RunResult:
        for node_id in sorted(self.nodes):
            self._seed_aex_chain(node_id)
        for node_id, node in sorted(self.nodes.items()):
            node.start()
        self.engine.run_until(self.scenario.horizon_ns)

        calibrated = {}
        for node_id, node in self.nodes.items():
            rate = node.clock.calibrated_ticks_per_s
            calibrated[node_id] = float(rate) / 1e6 if rate is not None else None
        summary = build_summary(
            self.scenario.name, self.scenario.seed, self.scenario.horizon_ns,
            self.records, self.transitions, self.jumps, self.initial_states,
            calibrated, self.unavailable,
        )
        return RunResult(
            scenario=self.scenario,
            records=self.records,
            transitions=self.transitions,
            jumps=self.jumps,
            serves=self.serves,
            unavailable_serves=self.unavailable,
            aex_delay_counts=self.aex_delay_counts,
            summary=summary,
            engine_trace=self.engine.trace_bytes(),
        )


def run_scenario(scenario: Scenario, *, seed: int | None = None,
                 horizon_ns: int | None = None, out_dir: str | Path | None = None) -> RunResult:
    """Run a scenario to its horizon; optionally export the trace directory."""
    if seed is not None or horizon_ns is not None:
        scenario = dataclasses.replace(
            scenario,
            seed=scenario.seed if seed is None else seed,
            horizon_ns=scenario.horizon_ns if horizon_ns is None else horizon_ns,
        )
    result = _Run(scenario).execute()
    if out_dir is not None:
        result.export(out_dir)
    return result
