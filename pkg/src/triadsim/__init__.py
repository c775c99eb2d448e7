"""Deterministic simulator for TEE trusted-time clusters.

The package models enclave nodes that calibrate a local tick counter against
a remote time authority, taint their clock on every asynchronous exit, and
recover time from peers or the authority. A man-in-the-middle position on
the calibration path lets scenarios reproduce clock speed-up and slow-down
attacks and study how they spread through peer recovery.
"""
from .attacks import AttackKind, AttackPolicy
from .clocks import AexSchedule, MonitorCounter, TscModel
from .engine import Engine
from .metrics import MetricsSummary
from .protocol import Node, NodeState, ProtocolConfig, TimeAuthority
from .runner import RunResult, run_scenario
from .scenarios import (Scenario, list_builtins, load_builtin, load_scenario,
                        resolve_scenario, validate)

__version__ = "0.1.0"

__all__ = [
    "AexSchedule",
    "AttackKind",
    "AttackPolicy",
    "Engine",
    "MetricsSummary",
    "MonitorCounter",
    "Node",
    "NodeState",
    "ProtocolConfig",
    "RunResult",
    "Scenario",
    "TimeAuthority",
    "TscModel",
    "list_builtins",
    "load_builtin",
    "load_scenario",
    "resolve_scenario",
    "run_scenario",
    "validate",
    "__version__",
]
