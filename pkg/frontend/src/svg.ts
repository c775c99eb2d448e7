/**
 * Minimal SVG chart scaffolding: fixed canvas, linear/log scales, axes,
 * lines, steps, bars, and a legend. Output is deterministic for a given
 * input: coordinates are formatted with a fixed precision and elements
 * are emitted in call order.
 */

export const WIDTH = 960;
export const HEIGHT = 540;
const MARGIN = { left: 72, right: 24, top: 40, bottom: 56 };

export function fmt(value: number): string {
  if (!Number.isFinite(value)) return "0";
  const rounded = Math.round(value * 100) / 100;
  // -0 would make byte-identity depend on the sign of rounding noise
  return (Object.is(rounded, -0) ? 0 : rounded).toString();
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export type Scale = (value: number) => number;

export function linearScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const span = d1 - d0 || 1;
  return (value) => r0 + ((value - d0) / span) * (r1 - r0);
}

/** Round tick positions covering [lo, hi] at a 1/2/5 step. */
export function ticks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / count;
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const candidates = [1, 2, 5, 10].map((m) => m * power);
  const step = candidates.find((c) => c >= rawStep) ?? 10 * power;
  const out: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return out;
}

export interface LineOptions {
  dash?: string;
  width?: number;
  /** draw as a right-continuous step instead of point-to-point */
  step?: boolean;
}

export class Chart {
  private parts: string[] = [];
  readonly x: Scale;
  readonly y: Scale;

  constructor(
    private xDomain: [number, number],
    private yDomain: [number, number],
    title: string,
    xLabel: string,
    yLabel: string,
    private yTickValues?: number[],
    private yTickFormat: (v: number) => string = fmt,
  ) {
    this.x = linearScale(xDomain[0], xDomain[1], MARGIN.left, WIDTH - MARGIN.right);
    this.y = linearScale(yDomain[0], yDomain[1], HEIGHT - MARGIN.bottom, MARGIN.top);
    this.parts.push(
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">${esc(title)}</text>`,
    );
    this.drawAxes(xLabel, yLabel);
  }

  private drawAxes(xLabel: string, yLabel: string): void {
    const x0 = MARGIN.left;
    const x1 = WIDTH - MARGIN.right;
    const y0 = HEIGHT - MARGIN.bottom;
    const y1 = MARGIN.top;
    for (const tx of ticks(this.xDomain[0], this.xDomain[1])) {
      const px = this.x(tx);
      this.parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y1}" stroke="#dddddd" stroke-width="1"/>`,
        `<text x="${fmt(px)}" y="${y0 + 18}" text-anchor="middle" font-size="12" font-family="sans-serif">${fmt(tx)}</text>`,
      );
    }
    for (const ty of this.yTickValues ?? ticks(this.yDomain[0], this.yDomain[1])) {
      const py = this.y(ty);
      this.parts.push(
        `<line x1="${x0}" y1="${fmt(py)}" x2="${x1}" y2="${fmt(py)}" stroke="#dddddd" stroke-width="1"/>`,
        `<text x="${x0 - 6}" y="${fmt(py + 4)}" text-anchor="end" font-size="12" font-family="sans-serif">${esc(this.yTickFormat(ty))}</text>`,
      );
    }
    this.parts.push(
      `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#000000" stroke-width="1"/>`,
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" text-anchor="middle" font-size="13" font-family="sans-serif">${esc(xLabel)}</text>`,
      `<text x="20" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 20 ${(y0 + y1) / 2})">${esc(yLabel)}</text>`,
    );
  }

  plotLine(xs: number[], ys: number[], color: string, options: LineOptions = {}): void {
    if (xs.length === 0) return;
    const pts: string[] = [];
    for (let i = 0; i < xs.length; i++) {
      if (options.step && i > 0) {
        pts.push(`${fmt(this.x(xs[i]))},${fmt(this.y(ys[i - 1]))}`);
      }
      pts.push(`${fmt(this.x(xs[i]))},${fmt(this.y(ys[i]))}`);
    }
    const dash = options.dash ? ` stroke-dasharray="${options.dash}"` : "";
    this.parts.push(
      `<polyline points="${pts.join(" ")}" fill="none" stroke="${color}" stroke-width="${options.width ?? 1.5}"${dash}/>`,
    );
  }

  verticalLine(xValue: number, color: string, dash = "6,4"): void {
    const px = fmt(this.x(xValue));
    this.parts.push(
      `<line x1="${px}" y1="${HEIGHT - MARGIN.bottom}" x2="${px}" y2="${MARGIN.top}" stroke="${color}" stroke-width="1.5" stroke-dasharray="${dash}"/>`,
    );
  }

  /** Filled axis-aligned rectangle in data coordinates. */
  band(x0: number, x1: number, y0: number, y1: number, color: string): void {
    const px = this.x(x0);
    const pw = Math.max(this.x(x1) - px, 0.1);
    const py = this.y(y1);
    const ph = Math.max(this.y(y0) - py, 0.1);
    this.parts.push(
      `<rect x="${fmt(px)}" y="${fmt(py)}" width="${fmt(pw)}" height="${fmt(ph)}" fill="${color}"/>`,
    );
  }

  label(xValue: number, yValue: number, text: string): void {
    this.parts.push(
      `<text x="${fmt(this.x(xValue))}" y="${fmt(this.y(yValue))}" text-anchor="end" font-size="12" font-family="sans-serif">${esc(text)}</text>`,
    );
  }

  legend(entries: Array<[string, string]>): void {
    let yPos = MARGIN.top + 14;
    for (const [name, color] of entries) {
      this.parts.push(
        `<rect x="${WIDTH - MARGIN.right - 150}" y="${yPos - 9}" width="18" height="9" fill="${color}"/>`,
        `<text x="${WIDTH - MARGIN.right - 126}" y="${yPos}" font-size="12" font-family="sans-serif">${esc(name)}</text>`,
      );
      yPos += 18;
    }
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      ...this.parts,
      "</svg>",
      "",
    ].join("\n");
  }
}
