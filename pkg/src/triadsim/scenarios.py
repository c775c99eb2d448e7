"""Declarative scenario schema: YAML loading, validation, builtin catalog.

Scenario files are versioned data; the builtin experiments ship as YAML
resources inside the package, not as code.  Validation reports every problem
with the field path that caused it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import yaml

from .attacks import AttackKind, AttackPolicy
from .clocks import DEFAULT_TSC_FREQUENCY
from .engine import (Choice, Constant, Distribution, Exponential, NS_PER_HOUR,
                     NS_PER_MIN, NS_PER_MS, NS_PER_S, NS_PER_US, Uniform)

SCHEMA_VERSION = 1

_DURATION_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*(ns|us|ms|s|m|h)\s*$")
_UNIT_NS = {"ns": 1, "us": NS_PER_US, "ms": NS_PER_MS, "s": NS_PER_S,
            "m": NS_PER_MIN, "h": NS_PER_HOUR}

KNOWN_REGIMES = ("triad_like", "low_aex", "none", "custom")


class ScenarioError(Exception):
    """Raised when a scenario file cannot be parsed at all."""


def parse_duration(value) -> int:
    """Durations are integer nanoseconds; strings accept ns/us/ms/s/m/h suffixes."""
    if isinstance(value, bool):
        raise ScenarioError(f"not a duration: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return int(value)
    if isinstance(value, str):
        match = _DURATION_RE.match(value)
        if not match:
            raise ScenarioError(f"cannot parse duration {value!r}")
        magnitude, unit = match.groups()
        return int(Fraction(magnitude) * _UNIT_NS[unit])
    raise ScenarioError(f"not a duration: {value!r}")


def parse_rate(value) -> Fraction:
    """Tick rates are exact rationals; accepts integer ticks/s or '<decimal>MHz'."""
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if text.lower().endswith("mhz"):
            return Fraction(text[:-3].strip()) * 1_000_000
        return Fraction(text)
    raise ScenarioError(f"cannot parse tick rate {value!r}")


def parse_distribution(spec) -> Distribution:
    if isinstance(spec, (int, str)):
        return Constant(parse_duration(spec))
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScenarioError(f"bad distribution spec {spec!r}")
    (kind, args), = spec.items()
    if kind == "constant":
        return Constant(parse_duration(args))
    if kind == "uniform":
        low, high = args
        return Uniform(parse_duration(low), parse_duration(high))
    if kind == "choice":
        values = tuple(parse_duration(v) for v in args["values"])
        weights = tuple(float(w) for w in args["weights"]) if "weights" in args else None
        return Choice(values, weights)
    if kind == "exponential":
        return Exponential(parse_duration(args))
    raise ScenarioError(f"unknown distribution kind {kind!r}")


def _distribution_to_dict(dist: Distribution | None):
    if dist is None:
        return None
    if isinstance(dist, Constant):
        return {"constant": dist.value_ns}
    if isinstance(dist, Uniform):
        return {"uniform": [dist.low_ns, dist.high_ns]}
    if isinstance(dist, Choice):
        body = {"values": list(dist.values_ns)}
        if dist.weights is not None:
            body["weights"] = list(dist.weights)
        return {"choice": body}
    return {"exponential": dist.mean_ns}


# ---------------------------------------------------------------------------
# schema dataclasses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkSpec:
    base_delay_ns: int = 5 * NS_PER_MS
    jitter: Distribution | None = Uniform(0, 2 * NS_PER_MS)
    loss_probability: float = 0.0


@dataclass(frozen=True)
class AexSpec:
    regime: str = "triad_like"
    distribution: Distribution | None = None


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    aex: AexSpec = AexSpec()
    attack: AttackPolicy | None = None
    tsc_frequency: int = DEFAULT_TSC_FREQUENCY
    initial_rate: Fraction | None = None  # skip start-up calibration when set


@dataclass(frozen=True)
class SwitchSpec:
    at_ns: int
    node_id: int
    aex: AexSpec


@dataclass(frozen=True)
class CalibrationSpec:
    pairs: int = 8
    sleeps_ns: tuple[int, ...] = (0, NS_PER_S)
    retry_budget: int = 3
    peer_timeout_ns: int = 200 * NS_PER_MS
    ref_timeout_ns: int = 200 * NS_PER_MS


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    horizon_ns: int
    nodes: tuple[NodeSpec, ...]
    version: int = SCHEMA_VERSION
    description: str = ""
    record_interval_ns: int = 100 * NS_PER_MS
    node_ta_link: LinkSpec = LinkSpec()
    node_node_link: LinkSpec = LinkSpec()
    correlated_aex_probability: float = 0.0
    switches: tuple[SwitchSpec, ...] = ()
    broadcast_aex_ns: tuple[int, ...] = ()
    calibration: CalibrationSpec = CalibrationSpec()
    ta_max_sleep_ns: int = 10 * NS_PER_S

    def node(self, node_id: int) -> NodeSpec:
        for spec in self.nodes:
            if spec.node_id == node_id:
                return spec
        raise KeyError(node_id)

    def meta_dict(self) -> dict:
        """Companion metadata written next to trace CSVs, for plots and replay."""
        return {
            "name": self.name,
            "seed": self.seed,
            "horizon_ns": self.horizon_ns,
            "record_interval_ns": self.record_interval_ns,
            "node_ids": [n.node_id for n in self.nodes],
            "regimes": {str(n.node_id): n.aex.regime for n in self.nodes},
            "attacks": {str(n.node_id): (n.attack.kind.value if n.attack else "none")
                        for n in self.nodes},
            "switch_times_ns": sorted({s.at_ns for s in self.switches}),
            "broadcast_aex_ns": list(self.broadcast_aex_ns),
        }


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _parse_link(body: dict) -> LinkSpec:
    jitter = body.get("jitter")
    return LinkSpec(
        base_delay_ns=parse_duration(body.get("base_delay", 5 * NS_PER_MS)),
        jitter=parse_distribution(jitter) if jitter is not None else None,
        loss_probability=float(body.get("loss", 0.0)),
    )


def _parse_aex(body: dict | None) -> AexSpec:
    if body is None:
        return AexSpec()
    regime = body.get("regime", "triad_like")
    dist = body.get("distribution")
    return AexSpec(regime=regime,
                   distribution=parse_distribution(dist) if dist is not None else None)


def _parse_attack(body: dict | None) -> AttackPolicy | None:
    if body is None:
        return None
    kind = AttackKind(body.get("kind", "none"))
    if kind is AttackKind.NONE:
        return None
    kwargs = {"kind": kind}
    if "added_delay" in body:
        kwargs["added_delay_ns"] = parse_duration(body["added_delay"])
    if "sleep_threshold" in body:
        kwargs["sleep_threshold_ns"] = parse_duration(body["sleep_threshold"])
    if "classifier_accuracy" in body:
        kwargs["classifier_accuracy"] = float(body["classifier_accuracy"])
    if "offset_ticks" in body:
        kwargs["offset_ticks"] = int(body["offset_ticks"])
    if "scale" in body:
        kwargs["scale"] = body["scale"]
    if "flood_interval" in body:
        kwargs["flood_interval_ns"] = parse_duration(body["flood_interval"])
    if "at" in body:
        kwargs["start_ns"] = parse_duration(body["at"])
    return AttackPolicy(**kwargs)


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a mapping")
    version = raw.get("version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"version: expected {SCHEMA_VERSION}, got {version!r}")
    try:
        nodes = []
        for body in raw.get("nodes", []):
            initial = body.get("calibrated_rate")
            nodes.append(NodeSpec(
                node_id=int(body["id"]),
                aex=_parse_aex(body.get("aex")),
                attack=_parse_attack(body.get("attack")),
                tsc_frequency=int(body.get("tsc_frequency", DEFAULT_TSC_FREQUENCY)),
                initial_rate=parse_rate(initial) if initial is not None else None,
            ))
        links = raw.get("links", {})
        switches = []
        for body in raw.get("switches", []):
            switches.append(SwitchSpec(
                at_ns=parse_duration(body["at"]),
                node_id=int(body["node"]),
                aex=_parse_aex(body.get("aex")),
            ))
        calib = raw.get("calibration", {})
        return Scenario(
            name=str(raw.get("name", "unnamed")),
            description=str(raw.get("description", "")),
            seed=int(raw.get("seed", 0)),
            horizon_ns=parse_duration(raw["horizon"]),
            record_interval_ns=parse_duration(raw.get("record_interval", 100 * NS_PER_MS)),
            nodes=tuple(nodes),
            node_ta_link=_parse_link(links["node_ta"]) if "node_ta" in links else LinkSpec(),
            node_node_link=_parse_link(links["node_node"]) if "node_node" in links else LinkSpec(),
            correlated_aex_probability=float(raw.get("correlated_aex_probability", 0.0)),
            switches=tuple(switches),
            broadcast_aex_ns=tuple(parse_duration(t) for t in raw.get("broadcast_aex", [])),
            calibration=CalibrationSpec(
                pairs=int(calib.get("pairs", 8)),
                sleeps_ns=tuple(parse_duration(s) for s in calib.get("sleeps", [0, NS_PER_S])),
                retry_budget=int(calib.get("retry_budget", 3)),
                peer_timeout_ns=parse_duration(calib.get("peer_timeout", 200 * NS_PER_MS)),
                ref_timeout_ns=parse_duration(calib.get("ref_timeout", 200 * NS_PER_MS)),
            ),
            ta_max_sleep_ns=parse_duration(raw.get("ta_max_sleep", 10 * NS_PER_S)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    raw = yaml.safe_load(Path(path).read_text())
    return scenario_from_dict(raw)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_distribution(dist: Distribution | None, path: str, errors: list[str]) -> None:
    if dist is None:
        return
    if isinstance(dist, Constant) and dist.value_ns < 0:
        errors.append(f"{path}: constant duration must be non-negative")
    if isinstance(dist, Uniform):
        if dist.low_ns < 0 or dist.high_ns < dist.low_ns:
            errors.append(f"{path}: uniform bounds must satisfy 0 <= low <= high")
    if isinstance(dist, Choice):
        if not dist.values_ns:
            errors.append(f"{path}: choice needs at least one value")
        if dist.weights is not None and len(dist.weights) != len(dist.values_ns):
            errors.append(f"{path}: weights must match values")
    if isinstance(dist, Exponential) and dist.mean_ns <= 0:
        errors.append(f"{path}: exponential mean must be positive")


def _check_link(link: LinkSpec, path: str, errors: list[str]) -> None:
    if link.base_delay_ns < 0:
        errors.append(f"{path}.base_delay: must be non-negative")
    if not 0.0 <= link.loss_probability <= 1.0:
        errors.append(f"{path}.loss: must be in [0, 1]")
    _check_distribution(link.jitter, f"{path}.jitter", errors)


def validate(scenario: Scenario) -> list[str]:
    """Return every schema problem as 'field.path: message' strings."""
    errors: list[str] = []
    if scenario.horizon_ns <= 0:
        errors.append("horizon: must be positive")
    if scenario.record_interval_ns <= 0:
        errors.append("record_interval: must be positive")
    if not scenario.nodes:
        errors.append("nodes: at least one node is required")
    if not 0.0 <= scenario.correlated_aex_probability <= 1.0:
        errors.append("correlated_aex_probability: must be in [0, 1]")
    if scenario.calibration.pairs < 1:
        errors.append("calibration.pairs: must be at least 1")
    if len(set(scenario.calibration.sleeps_ns)) < 2:
        errors.append("calibration.sleeps: need at least two distinct sleep values")
    if any(s < 0 or s > scenario.ta_max_sleep_ns for s in scenario.calibration.sleeps_ns):
        errors.append("calibration.sleeps: values must be within [0, ta_max_sleep]")

    seen_ids: set[int] = set()
    for i, node in enumerate(scenario.nodes):
        path = f"nodes[{i}]"
        if node.node_id <= 0:
            errors.append(f"{path}.id: must be a positive integer (0 is the time authority)")
        if node.node_id in seen_ids:
            errors.append(f"{path}.id: duplicate node id {node.node_id}")
        seen_ids.add(node.node_id)
        if node.tsc_frequency <= 0:
            errors.append(f"{path}.tsc_frequency: must be positive")
        if node.initial_rate is not None and node.initial_rate <= 0:
            errors.append(f"{path}.calibrated_rate: must be positive")
        if node.aex.regime not in KNOWN_REGIMES:
            errors.append(f"{path}.aex.regime: unknown regime {node.aex.regime!r}")
        if node.aex.regime == "custom" and node.aex.distribution is None:
            errors.append(f"{path}.aex.distribution: required for the custom regime")
        _check_distribution(node.aex.distribution, f"{path}.aex.distribution", errors)
        if node.attack is not None:
            if node.attack.added_delay_ns < 0:
                errors.append(f"{path}.attack.added_delay: must be non-negative")
            if node.attack.start_ns < 0:
                errors.append(f"{path}.attack.at: must be non-negative")

    _check_link(scenario.node_ta_link, "links.node_ta", errors)
    _check_link(scenario.node_node_link, "links.node_node", errors)

    for i, switch in enumerate(scenario.switches):
        path = f"switches[{i}]"
        if switch.node_id not in seen_ids:
            errors.append(f"{path}.node: unknown node id {switch.node_id}")
        if not 0 <= switch.at_ns <= scenario.horizon_ns:
            errors.append(f"{path}.at: must lie within the horizon")
        if switch.aex.regime not in KNOWN_REGIMES:
            errors.append(f"{path}.aex.regime: unknown regime {switch.aex.regime!r}")
        if switch.aex.regime == "custom" and switch.aex.distribution is None:
            errors.append(f"{path}.aex.distribution: required for the custom regime")

    for i, at_ns in enumerate(scenario.broadcast_aex_ns):
        if not 0 <= at_ns <= scenario.horizon_ns:
            errors.append(f"broadcast_aex[{i}]: must lie within the horizon")

    return errors


# ---------------------------------------------------------------------------
# builtin catalog
# ---------------------------------------------------------------------------

def _builtin_dir():
    return resources.files("triadsim") / "builtin_scenarios"


def list_builtins() -> list[tuple[str, str]]:
    """(name, description) for every scenario shipped with the package."""
    out = []
    for entry in sorted(_builtin_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            raw = yaml.safe_load(entry.read_text())
            out.append((raw["name"], raw.get("description", "")))
    return out


def load_builtin(name: str) -> Scenario:
    entry = _builtin_dir() / f"{name}.yaml"
    try:
        text = entry.read_text()
    except FileNotFoundError:
        known = ", ".join(n for n, _ in list_builtins())
        raise ScenarioError(f"no builtin scenario {name!r} (have: {known})") from None
    return scenario_from_dict(yaml.safe_load(text))


def resolve_scenario(ref: str) -> Scenario:
    """Accept either a builtin name or a path to a YAML file."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    return load_builtin(ref)
