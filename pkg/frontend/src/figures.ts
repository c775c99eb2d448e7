import { readFileSync } from "node:fs";
import { join } from "node:path";

import { numberColumn, readCsv, SchemaError, type Table } from "./csv.js";
import { Chart } from "./svg.js";

export const FIGURE_KINDS = [
  "drift",
  "aex_cdf",
  "aex_count",
  "states_timeline",
  "state_durations",
  "ta_count",
] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

/** Node 1 blue, node 2 orange, node 3 black; extras cycle grey. */
export const NODE_COLORS: Record<number, string> = {
  1: "#1f77b4",
  2: "#ff7f0e",
  3: "#000000",
};
export const SWITCH_LINE_COLOR = "#d62728";

const STATE_ORDER = ["FullCalib", "RefCalib", "Tainted", "OK"] as const;
const STATE_COLORS: Record<string, string> = {
  FullCalib: "#8c564b",
  RefCalib: "#9467bd",
  Tainted: "#d62728",
  OK: "#2ca02c",
};

interface Meta {
  name: string;
  nodeIds: number[];
  horizonNs: number;
  switchTimesNs: number[];
}

function readMeta(traceDir: string): Meta {
  const raw = JSON.parse(readFileSync(join(traceDir, "meta.json"), "utf8"));
  return {
    name: String(raw.name ?? "trace"),
    nodeIds: (raw.node_ids ?? []).map(Number),
    horizonNs: Number(raw.horizon_ns ?? 0),
    switchTimesNs: (raw.switch_times_ns ?? []).map(Number),
  };
}

function nodeColor(nodeId: number): string {
  return NODE_COLORS[nodeId] ?? "#7f7f7f";
}

function legendEntries(meta: Meta): Array<[string, string]> {
  return meta.nodeIds.map((id) => [`Node ${id}`, nodeColor(id)]);
}

function drawSwitchLines(chart: Chart, meta: Meta): void {
  for (const t of meta.switchTimesNs) {
    chart.verticalLine(t / 1e9, SWITCH_LINE_COLOR);
  }
}

/** Split parallel column arrays into per-node series, preserving order. */
function byNode(nodes: number[], xs: number[], ys: number[]): Map<number, { xs: number[]; ys: number[] }> {
  const series = new Map<number, { xs: number[]; ys: number[] }>();
  for (let i = 0; i < nodes.length; i++) {
    let entry = series.get(nodes[i]);
    if (!entry) {
      entry = { xs: [], ys: [] };
      series.set(nodes[i], entry);
    }
    entry.xs.push(xs[i]);
    entry.ys.push(ys[i]);
  }
  return series;
}

function extent(values: number[], fallback: [number, number]): [number, number] {
  if (values.length === 0) return fallback;
  let lo = values[0];
  let hi = values[0];
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

function driftFigure(traceDir: string, meta: Meta): string {
  const table = readCsv(join(traceDir, "drift.csv"), ["t_ref_ns", "node", "drift_ns"]);
  const t = numberColumn(table, "t_ref_ns").map((v) => v / 1e9);
  const nodes = numberColumn(table, "node");
  const drift = numberColumn(table, "drift_ns").map((v) => v / 1e6);
  const chart = new Chart(
    [0, meta.horizonNs / 1e9 || 1],
    extent(drift, [-1, 1]),
    `${meta.name}: drift vs reference time`,
    "reference time (s)",
    "drift (ms)",
  );
  drawSwitchLines(chart, meta);
  for (const [nodeId, series] of byNode(nodes, t, drift)) {
    chart.plotLine(series.xs, series.ys, nodeColor(nodeId));
  }
  chart.legend(legendEntries(meta));
  return chart.render();
}

/** Cumulative fraction at each delay atom, smallest first. */
export function cdfPoints(delaysMs: number[], counts: number[]): Array<{ x: number; y: number }> {
  const order = delaysMs.map((_, i) => i).sort((a, b) => delaysMs[a] - delaysMs[b]);
  const total = counts.reduce((acc, c) => acc + c, 0);
  if (total === 0) return [];
  const points: Array<{ x: number; y: number }> = [];
  let cum = 0;
  for (const i of order) {
    cum += counts[i];
    points.push({ x: delaysMs[i], y: cum / total });
  }
  return points;
}

function aexCdfFigure(traceDir: string, meta: Meta): string {
  const table = readCsv(join(traceDir, "aex_delays_hist.csv"), ["delay_ms", "count"]);
  const points = cdfPoints(numberColumn(table, "delay_ms"), numberColumn(table, "count"));
  const xMax = points.length > 0 ? points[points.length - 1].x * 1.1 : 1;
  const chart = new Chart(
    [0, xMax],
    [0, 1],
    `${meta.name}: interrupt handler delay CDF`,
    "handler delay (ms)",
    "cumulative fraction",
  );
  if (points.length > 0) {
    const xs = [0, ...points.map((p) => p.x), xMax];
    const ys = [0, ...points.map((p) => p.y), points[points.length - 1].y];
    chart.plotLine(xs, ys, "#1f77b4", { step: true, width: 2 });
  }
  return chart.render();
}

function counterFigure(
  traceDir: string,
  meta: Meta,
  file: string,
  valueColumn: string,
  title: string,
  yLabel: string,
): string {
  const table = readCsv(join(traceDir, file), ["t_ref_ns", "node", valueColumn]);
  const t = numberColumn(table, "t_ref_ns").map((v) => v / 1e9);
  const nodes = numberColumn(table, "node");
  const values = numberColumn(table, valueColumn);
  const chart = new Chart(
    [0, meta.horizonNs / 1e9 || 1],
    [0, extent(values, [0, 1])[1]],
    `${meta.name}: ${title}`,
    "reference time (s)",
    yLabel,
  );
  drawSwitchLines(chart, meta);
  for (const [nodeId, series] of byNode(nodes, t, values)) {
    chart.plotLine(series.xs, series.ys, nodeColor(nodeId), { step: true });
  }
  chart.legend(legendEntries(meta));
  return chart.render();
}

interface StateSegment {
  node: number;
  state: string;
  startNs: number;
  endNs: number;
}

/** Merge consecutive identical state samples into [start, end) segments. */
export function stateSegments(
  nodes: number[],
  timesNs: number[],
  states: string[],
  horizonNs: number,
): StateSegment[] {
  const open = new Map<number, StateSegment>();
  const segments: StateSegment[] = [];
  for (let i = 0; i < nodes.length; i++) {
    const current = open.get(nodes[i]);
    if (current && current.state === states[i]) continue;
    if (current) {
      current.endNs = timesNs[i];
      segments.push(current);
    }
    open.set(nodes[i], { node: nodes[i], state: states[i], startNs: timesNs[i], endNs: timesNs[i] });
  }
  for (const segment of open.values()) {
    segment.endNs = horizonNs;
    segments.push(segment);
  }
  return segments.sort((a, b) => a.startNs - b.startNs || a.node - b.node);
}

function readStateSegments(traceDir: string, meta: Meta): StateSegment[] {
  const table: Table = readCsv(join(traceDir, "states.csv"), ["t_ref_ns", "node", "state"]);
  const times = numberColumn(table, "t_ref_ns");
  const nodes = numberColumn(table, "node");
  const idx = table.columns.indexOf("state");
  const states = table.rows.map((row) => row[idx] ?? "");
  return stateSegments(nodes, times, states, meta.horizonNs);
}

function statesTimelineFigure(traceDir: string, meta: Meta): string {
  const segments = readStateSegments(traceDir, meta);
  const lanes = new Map(meta.nodeIds.map((id, i) => [id, i]));
  const laneCenters = meta.nodeIds.map((_, i) => i + 0.5);
  const chart = new Chart(
    [0, meta.horizonNs / 1e9 || 1],
    [0, Math.max(meta.nodeIds.length, 1)],
    `${meta.name}: node states over time`,
    "reference time (s)",
    "",
    laneCenters,
    (v) => `Node ${meta.nodeIds[Math.floor(v)] ?? "?"}`,
  );
  for (const segment of segments) {
    const lane = lanes.get(segment.node);
    if (lane === undefined) continue;
    chart.band(
      segment.startNs / 1e9,
      segment.endNs / 1e9,
      lane + 0.15,
      lane + 0.85,
      STATE_COLORS[segment.state] ?? "#7f7f7f",
    );
  }
  drawSwitchLines(chart, meta);
  chart.legend(STATE_ORDER.map((state) => [state, STATE_COLORS[state]]));
  return chart.render();
}

function stateDurationsFigure(traceDir: string, meta: Meta): string {
  const segments = readStateSegments(traceDir, meta);
  const totals = new Map<number, Map<string, number>>();
  for (const segment of segments) {
    let perState = totals.get(segment.node);
    if (!perState) {
      perState = new Map();
      totals.set(segment.node, perState);
    }
    perState.set(segment.state, (perState.get(segment.state) ?? 0) + (segment.endNs - segment.startNs) / 1e9);
  }
  const positives: number[] = [];
  for (const perState of totals.values()) {
    for (const seconds of perState.values()) {
      if (seconds > 0) positives.push(seconds);
    }
  }
  // log axis: state residencies span microseconds to hours
  const loPow = positives.length > 0 ? Math.floor(Math.log10(Math.min(...positives))) : -3;
  const hiPow = positives.length > 0 ? Math.ceil(Math.log10(Math.max(...positives))) : 1;
  const powers = [];
  for (let p = loPow; p <= hiPow; p++) powers.push(p);
  const chart = new Chart(
    [0, STATE_ORDER.length],
    [loPow, hiPow],
    `${meta.name}: total time per state`,
    "",
    "total time (s, log scale)",
    powers,
    (p) => Math.pow(10, p).toString(),
  );
  const groupWidth = 0.8;
  const barWidth = meta.nodeIds.length > 0 ? groupWidth / meta.nodeIds.length : groupWidth;
  STATE_ORDER.forEach((state, stateIdx) => {
    chart.label(stateIdx + 0.7, loPow - (hiPow - loPow) * 0.04, state);
    meta.nodeIds.forEach((nodeId, nodeIdx) => {
      const seconds = totals.get(nodeId)?.get(state) ?? 0;
      if (seconds <= 0) return;
      const x0 = stateIdx + 0.1 + nodeIdx * barWidth;
      chart.band(x0, x0 + barWidth * 0.9, loPow, Math.log10(seconds), nodeColor(nodeId));
    });
  });
  chart.legend(legendEntries(meta));
  return chart.render();
}

/** Render one figure kind from a trace directory into SVG markup. */
export function renderFigure(kind: FigureKind, traceDir: string): string {
  const meta = readMeta(traceDir);
  switch (kind) {
    case "drift":
      return driftFigure(traceDir, meta);
    case "aex_cdf":
      return aexCdfFigure(traceDir, meta);
    case "aex_count":
      return counterFigure(traceDir, meta, "aex.csv", "cum_aex",
        "cumulative enclave exits", "cumulative AEX count");
    case "ta_count":
      return counterFigure(traceDir, meta, "ta.csv", "cum_ta_ref",
        "cumulative authority recalibrations", "cumulative ref-calibrations");
    case "states_timeline":
      return statesTimelineFigure(traceDir, meta);
    case "state_durations":
      return stateDurationsFigure(traceDir, meta);
    default: {
      const never: never = kind;
      throw new SchemaError(`unknown figure kind ${String(never)}`);
    }
  }
}
