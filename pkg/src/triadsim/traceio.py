"""Trace directory layout: CSV writers and readers with documented headers.

Files written per run (all times integer nanoseconds, newline-terminated,
byte-reproducible for a fixed scenario and seed):

    drift.csv           t_ref_ns,node,node_time_ns,drift_ns
    states.csv          t_ref_ns,node,state
    aex.csv             t_ref_ns,node,cum_aex
    ta.csv              t_ref_ns,node,cum_ta_ref
    aex_delays_hist.csv delay_ms,count
    jumps.csv           t_ref_ns,node,source,adopted,magnitude_ns,new_time_ns
    summary.json        metrics summary
    meta.json           scenario echo (switch times, regimes, attack kinds)

drift.csv only contains rows for nodes that already have a calibration
anchor; the other time-series files cover every node from t=0.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .metrics import Jump, MetricsSummary, Record, Transition

DRIFT_HEADER = ["t_ref_ns", "node", "node_time_ns", "drift_ns"]
STATES_HEADER = ["t_ref_ns", "node", "state"]
AEX_HEADER = ["t_ref_ns", "node", "cum_aex"]
TA_HEADER = ["t_ref_ns", "node", "cum_ta_ref"]
HIST_HEADER = ["delay_ms", "count"]
JUMPS_HEADER = ["t_ref_ns", "node", "source", "adopted", "magnitude_ns", "new_time_ns"]


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_trace_dir(
    out_dir: str | Path,
    records: list[Record],
    jumps: list[Jump],
    aex_delay_counts: dict[int, int],
    summary: MetricsSummary,
    meta: dict,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "drift.csv", DRIFT_HEADER,
               ((r.t_ns, r.node, r.node_time_ns, r.drift_ns)
                for r in records if r.node_time_ns is not None))
    _write_csv(out / "states.csv", STATES_HEADER,
               ((r.t_ns, r.node, r.state) for r in records))
    _write_csv(out / "aex.csv", AEX_HEADER,
               ((r.t_ns, r.node, r.cum_aex) for r in records))
    _write_csv(out / "ta.csv", TA_HEADER,
               ((r.t_ns, r.node, r.cum_ta_ref) for r in records))
    _write_csv(out / "aex_delays_hist.csv", HIST_HEADER,
               ((delay_ms, count) for delay_ms, count in sorted(aex_delay_counts.items())))
    _write_csv(out / "jumps.csv", JUMPS_HEADER,
               ((j.t_ns, j.node, j.source, int(j.adopted), j.magnitude_ns, j.new_time_ns)
                for j in jumps))
    (out / "summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


class TraceDirError(Exception):
    pass


def _read_csv(path: Path, expected_header: list[str]) -> list[list[str]]:
    if not path.exists():
        raise TraceDirError(f"missing trace file {path.name}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise TraceDirError(f"{path.name}: expected header {expected_header}, got {header}")
        return list(reader)


def read_trace_dir(trace_dir: str | Path) -> dict:
    """Load a trace directory back into records/jumps/meta for summarizing."""
    root = Path(trace_dir)
    meta = json.loads((root / "meta.json").read_text())
    states = _read_csv(root / "states.csv", STATES_HEADER)
    drift = _read_csv(root / "drift.csv", DRIFT_HEADER)
    aex = _read_csv(root / "aex.csv", AEX_HEADER)
    ta = _read_csv(root / "ta.csv", TA_HEADER)
    jumps_rows = _read_csv(root / "jumps.csv", JUMPS_HEADER)

    drift_at = {(int(r[0]), int(r[1])): (int(r[2]), int(r[3])) for r in drift}
    aex_at = {(int(r[0]), int(r[1])): int(r[2]) for r in aex}
    ta_at = {(int(r[0]), int(r[1])): int(r[2]) for r in ta}

    records: list[Record] = []
    for t_txt, node_txt, state in states:
        key = (int(t_txt), int(node_txt))
        node_time, drift_ns = drift_at.get(key, (None, None))
        records.append(Record(key[0], key[1], state, node_time, drift_ns,
                              aex_at.get(key, 0), ta_at.get(key, 0)))
    jumps = [Jump(int(t), int(node), source, bool(int(adopted)), int(mag), int(new))
             for t, node, source, adopted, mag, new in jumps_rows]
    return {"meta": meta, "records": records, "jumps": jumps}


def summarize_dir(trace_dir: str | Path) -> MetricsSummary:
    """Recompute run metrics from an exported trace directory."""
    from .metrics import build_summary  # local import keeps module load cheap

    root = Path(trace_dir)
    data = read_trace_dir(root)
    meta = data["meta"]
    records: list[Record] = data["records"]

    transitions: list[Transition] = []
    last_state: dict[int, str] = {}
    initial_states: dict[int, str] = {}
    for rec in records:
        if rec.node not in last_state:
            initial_states[rec.node] = rec.state
        elif last_state[rec.node] != rec.state:
            transitions.append(Transition(rec.t_ns, rec.node, last_state[rec.node], rec.state))
        last_state[rec.node] = rec.state

    calibrated = {}
    unavailable = {}
    summary_path = root / "summary.json"
    if summary_path.exists():
        stored = json.loads(summary_path.read_text())
        for node_txt, body in stored.get("per_node", {}).items():
            calibrated[int(node_txt)] = body.get("calibrated_mhz")
            unavailable[int(node_txt)] = body.get("unavailable_serves", 0)

    return build_summary(
        meta["name"], meta["seed"], meta["horizon_ns"],
        records, transitions, data["jumps"], initial_states,
        calibrated, unavailable,
    )
