/**
 * SVG figure rendering for bound-verification CSVs.
 *
 * price_vs_N scatters measured defected prices against the (ln N + 1)/N
 * overlay; price_vs_M uses the M/e^(M-1) overlay; bound_table tabulates
 * measured values against their bounds. Output is deterministic: no
 * timestamps, no randomness, identical inputs give identical bytes.
 */

import { MetricsRow } from "./csv.js";

export type FigureKind = "price_vs_N" | "price_vs_M" | "bound_table";

export interface FigurePoint {
  x: number;
  y: number;
  se: number;
  bandLo: number | null;
  bandHi: number | null;
  inBand: boolean;
  label: string;
  primary: boolean;
}

export interface Figure {
  svg: string;
  caption: string;
  points: FigurePoint[];
  allPrimaryInBand: boolean;
}

const WIDTH = 860;
const HEIGHT = 520;
const MARGIN = { left: 70, right: 30, top: 30, bottom: 110 };

function fmt(x: number): string {
  return Number(x.toFixed(4)).toString();
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

interface Scale {
  (value: number): number;
}

function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

function axisSvg(
  xs: Scale,
  ys: Scale,
  xTicks: number[],
  yTicks: number[],
  xLabel: string,
  yLabel: string
): string {
  const parts: string[] = [];
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const yBase = HEIGHT - MARGIN.bottom;
  parts.push(
    `<line x1="${x0}" y1="${yBase}" x2="${x1}" y2="${yBase}" stroke="#333"/>`,
    `<line x1="${x0}" y1="${MARGIN.top}" x2="${x0}" y2="${yBase}" stroke="#333"/>`
  );
  for (const t of xTicks) {
    const px = xs(t);
    parts.push(
      `<line x1="${fmt(px)}" y1="${yBase}" x2="${fmt(px)}" y2="${yBase + 5}" stroke="#333"/>`,
      `<text x="${fmt(px)}" y="${yBase + 20}" text-anchor="middle" font-size="12">${fmt(t)}</text>`
    );
  }
  for (const t of yTicks) {
    const py = ys(t);
    parts.push(
      `<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="#333"/>`,
      `<text x="${x0 - 9}" y="${fmt(py + 4)}" text-anchor="end" font-size="12">${fmt(t)}</text>`
    );
  }
  parts.push(
    `<text x="${(x0 + x1) / 2}" y="${yBase + 42}" text-anchor="middle" font-size="13">${esc(xLabel)}</text>`,
    `<text x="18" y="${(MARGIN.top + yBase) / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${(MARGIN.top + yBase) / 2})">${esc(yLabel)}</text>`
  );
  return parts.join("\n");
}

interface GroupedPoint {
  x: number;
  y: number;
  se: number;
  lower: number | null;
  upper: number | null;
  label: string;
  primary: boolean;
}

/**
 * Collapse bound rows sharing one x-cell into a single measured point with
 * an admissible band. Lower rows contribute bound - (3 se + 0.01); upper
 * rows contribute bound + 3 se, mirroring the suite tolerances.
 */
function collapseCell(
  x: number,
  label: string,
  rows: MetricsRow[],
  primary: boolean
): GroupedPoint {
  const measured = rows[0].market_price ?? 0;
  const se = rows[0].stderr ?? 0;
  let lower: number | null = null;
  let upper: number | null = null;
  const bounded = rows.filter((r) => r.bound_value !== null);
  if (bounded.length === 1) {
    const b = bounded[0].bound_value!;
    if (b <= measured) lower = b - (3 * se + 0.01);
    else upper = b + 3 * se;
  } else if (bounded.length >= 2) {
    const values = bounded.map((r) => r.bound_value!) as number[];
    lower = Math.min(...values) - (3 * se + 0.01);
    upper = Math.max(...values) + 3 * se;
  }
  return { x, y: measured, se, lower, upper, label, primary };
}

function pointsSvg(points: GroupedPoint[], xs: Scale, ys: Scale): string {
  const parts: string[] = [];
  for (const p of points) {
    const px = xs(p.x);
    const py = ys(p.y);
    const errLo = ys(p.y - 3 * p.se);
    const errHi = ys(p.y + 3 * p.se);
    const inBand =
      (p.lower === null || p.y >= p.lower) && (p.upper === null || p.y <= p.upper);
    const color = p.primary ? (inBand ? "#1a7a2e" : "#c22") : "#888";
    if (p.lower !== null && p.upper !== null) {
      const bandTop = ys(p.upper);
      const bandBot = ys(p.lower);
      parts.push(
        `<rect x="${fmt(px - 7)}" y="${fmt(bandTop)}" width="14" height="${fmt(bandBot - bandTop)}" fill="${color}" opacity="0.12"/>`
      );
    }
    parts.push(
      `<line x1="${fmt(px)}" y1="${fmt(errLo)}" x2="${fmt(px)}" y2="${fmt(errHi)}" stroke="${color}" stroke-width="1.5"/>`,
      `<circle cx="${fmt(px)}" cy="${fmt(py)}" r="4.5" fill="${color}"/>`,
      `<text x="${fmt(px + 8)}" y="${fmt(py - 8)}" font-size="10" fill="${color}">${esc(p.label)}</text>`
    );
  }
  return parts.join("\n");
}

function overlaySvg(
  fn: (x: number) => number,
  domain: [number, number],
  xs: Scale,
  ys: Scale
): string {
  const steps = 120;
  const coords: string[] = [];
  for (let i = 0; i <= steps; i++) {
    const x = domain[0] + ((domain[1] - domain[0]) * i) / steps;
    coords.push(`${fmt(xs(x))},${fmt(ys(fn(x)))}`);
  }
  return `<polyline points="${coords.join(" ")}" fill="none" stroke="#1f5fbf" stroke-width="2" stroke-dasharray="6 3"/>`;
}

function wrapSvg(body: string, caption: string): string {
  const lines = caption.match(/.{1,110}(\s|$)/g) ?? [caption];
  const captionSvg = lines
    .map(
      (line, i) =>
        `<text x="${MARGIN.left}" y="${HEIGHT - 64 + 14 * i}" font-size="11" fill="#444">${esc(line.trim())}</text>`
    )
    .join("\n");
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif">`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
    body,
    captionSvg,
    `</svg>`,
  ].join("\n");
}

function buildScatter(
  grouped: GroupedPoint[],
  overlay: (x: number) => number,
  overlayName: string,
  xLabel: string,
  invocation: string,
  boundIds: string[]
): Figure {
  if (grouped.length === 0) {
    const caption = `no data rows; ${invocation}`;
    const svg = wrapSvg(
      `<text x="${WIDTH / 2}" y="${HEIGHT / 2}" text-anchor="middle" font-size="14" fill="#999">no data</text>` +
        axisSvg(
          linearScale([0, 1], [MARGIN.left, WIDTH - MARGIN.right]),
          linearScale([0, 1], [HEIGHT - MARGIN.bottom, MARGIN.top]),
          [],
          [],
          xLabel,
          "market price"
        ),
      caption
    );
    return { svg, caption, points: [], allPrimaryInBand: true };
  }
  const xValues = grouped.map((p) => p.x);
  const xMin = Math.min(...xValues) - 0.5;
  const xMax = Math.max(...xValues) + 0.5;
  const xs = linearScale([xMin, xMax], [MARGIN.left, WIDTH - MARGIN.right]);
  const ys = linearScale([0, 1], [HEIGHT - MARGIN.bottom, MARGIN.top]);
  const xTicks = [...new Set(xValues)].sort((a, b) => a - b);
  const yTicks = [0, 0.2, 0.4, 0.6, 0.8, 1.0];
  const body = [
    axisSvg(xs, ys, xTicks, yTicks, xLabel, "market price"),
    overlaySvg(overlay, [Math.min(...xValues), Math.max(...xValues)], xs, ys),
    pointsSvg(grouped, xs, ys),
    `<text x="${WIDTH - MARGIN.right}" y="${MARGIN.top + 4}" text-anchor="end" font-size="12" fill="#1f5fbf">overlay: ${esc(overlayName)}</text>`,
  ].join("\n");
  const points: FigurePoint[] = grouped.map((p) => ({
    x: p.x,
    y: p.y,
    se: p.se,
    bandLo: p.lower,
    bandHi: p.upper,
    inBand:
      (p.lower === null || p.y >= p.lower) && (p.upper === null || p.y <= p.upper),
    label: p.label,
    primary: p.primary,
  }));
  const allPrimaryInBand = points.filter((p) => p.primary).every((p) => p.inBand);
  const caption =
    `measured prices with 3-stderr error bars and shaded admissible bands vs the ${overlayName} overlay; ` +
    `bound ids: ${boundIds.join(", ")}; reproduce with: ${invocation}`;
  return { svg: wrapSvg(body, caption), caption, points, allPrimaryInBand };
}

export function priceVsN(rows: MetricsRow[], invocation: string): Figure {
  const byN = new Map<number, MetricsRow[]>();
  for (const row of rows) {
    if (row.N === null || row.market_price === null) continue;
    if (!byN.has(row.N)) byN.set(row.N, []);
    byN.get(row.N)!.push(row);
  }
  const grouped = [...byN.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([n, cell]) => collapseCell(n, `N=${n}`, cell, true));
  const boundIds = [...new Set(rows.map((r) => r.bound_id).filter(Boolean))];
  return buildScatter(
    grouped,
    (n) => (Math.log(n) + 1) / n,
    "(ln N + 1)/N",
    "players N",
    invocation,
    boundIds
  );
}

export function priceVsM(rows: MetricsRow[], invocation: string): Figure {
  const cells = new Map<string, { m: number; rows: MetricsRow[]; primary: boolean; label: string }>();
  for (const row of rows) {
    if (row.M === null || row.market_price === null) continue;
    const bystander = row.experiment_id.includes("bystander");
    const mode = row.sampling_mode || "";
    const primary = mode === "correlated" && !bystander;
    const key = `${row.M}|${mode}|${bystander ? row.experiment_id : ""}`;
    if (!cells.has(key)) {
      const label = bystander
        ? `M=${row.M} bystanders`
        : `M=${row.M} ${mode}`.trim();
      cells.set(key, { m: row.M, rows: [], primary, label });
    }
    cells.get(key)!.rows.push(row);
  }
  const grouped = [...cells.values()]
    .sort((a, b) => a.m - b.m || a.label.localeCompare(b.label))
    .map((cell) => collapseCell(cell.m, cell.label, cell.rows, cell.primary));
  const boundIds = [...new Set(rows.map((r) => r.bound_id).filter(Boolean))];
  return buildScatter(
    grouped,
    (m) => m / Math.exp(m - 1),
    "M/e^(M-1)",
    "defectors M",
    invocation,
    boundIds
  );
}

export function boundTable(rows: MetricsRow[], invocation: string): Figure {
  const header = ["experiment_id", "construction", "measured", "bound_id", "bound", "pass"];
  const widths = [240, 150, 100, 130, 100, 60];
  const rowH = 22;
  const tableRows = rows.filter((r) => r.bound_id !== "");
  const parts: string[] = [];
  let y = MARGIN.top + rowH;
  let x = MARGIN.left;
  header.forEach((name, j) => {
    parts.push(
      `<text x="${x}" y="${y}" font-size="12" font-weight="bold">${esc(name)}</text>`
    );
    x += widths[j];
  });
  for (const row of tableRows) {
    y += rowH;
    x = MARGIN.left;
    const cells = [
      row.experiment_id,
      row.construction,
      row.market_price === null ? "" : fmt(row.market_price),
      row.bound_id,
      row.bound_value === null ? "" : fmt(row.bound_value),
      row.pass === null ? "" : String(row.pass),
    ];
    const color = row.pass === false ? "#c22" : "#222";
    cells.forEach((cell, j) => {
      parts.push(
        `<text x="${x}" y="${y}" font-size="11" fill="${color}">${esc(cell)}</text>`
      );
      x += widths[j];
    });
  }
  const height = Math.max(HEIGHT, y + 90);
  const nPass = tableRows.filter((r) => r.pass === true).length;
  const caption =
    `${nPass}/${tableRows.length} bound rows pass; reproduce with: ${invocation}`;
  const svg = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${height}" viewBox="0 0 ${WIDTH} ${height}" font-family="sans-serif">`,
    `<rect width="${WIDTH}" height="${height}" fill="white"/>`,
    parts.join("\n"),
    `<text x="${MARGIN.left}" y="${y + 40}" font-size="11" fill="#444">${esc(caption)}</text>`,
    `</svg>`,
  ].join("\n");
  const points: FigurePoint[] = tableRows.map((r) => ({
    x: 0,
    y: r.market_price ?? 0,
    se: r.stderr ?? 0,
    bandLo: null,
    bandHi: null,
    inBand: r.pass !== false,
    label: r.experiment_id,
    primary: true,
  }));
  return {
    svg,
    caption,
    points,
    allPrimaryInBand: tableRows.every((r) => r.pass !== false),
  };
}

export function renderFigure(
  kind: FigureKind,
  rows: MetricsRow[],
  invocation: string
): Figure {
  if (kind === "price_vs_N") return priceVsN(rows, invocation);
  if (kind === "price_vs_M") return priceVsM(rows, invocation);
  if (kind === "bound_table") return boundTable(rows, invocation);
  throw new Error(`unknown figure kind: ${kind}`);
}
