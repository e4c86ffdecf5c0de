/**
 * Deterministic SVG rendering for the four figure kinds.
 *
 * Pure string assembly from the parsed tables: no clocks, no randomness, no
 * environment lookups; identical inputs and package version give identical
 * bytes.  The version is stamped into the SVG metadata.
 */

import { Table, column, requireColumns } from "./csv.js";
import { FigureKind, REQUIRED_COLUMNS } from "./schemas.js";

export const PLOTS_VERSION = "0.1.0";

const WIDTH = 640;
const HEIGHT = 440;
const MARGIN = { left: 70, right: 24, top: 44, bottom: 52 };
const COLORS = ["#1f6fb2", "#c44e52", "#55a868", "#8172b3", "#937860"];

export interface FigureOverrides {
  title?: string;
  xlabel?: string;
  ylabel?: string;
}

interface Scale {
  (v: number): number;
  ticks: number[];
  label: (v: number) => string;
}

function fmt(v: number): string {
  if (!isFinite(v)) return "nan";
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return parseFloat(v.toPrecision(4)).toString();
  }
  return v.toExponential(2);
}

function linScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(hi > lo)) hi = lo + 1;
  const pad = 0.06 * (hi - lo);
  const a = lo - pad;
  const b = hi + pad;
  const f = ((v: number) => outLo + ((v - a) / (b - a)) * (outHi - outLo)) as Scale;
  const step = niceStep(b - a);
  const ticks: number[] = [];
  for (let t = Math.ceil(a / step) * step; t <= b + 1e-12; t += step) {
    ticks.push(parseFloat(t.toPrecision(12)));
  }
  f.ticks = ticks;
  f.label = fmt;
  return f;
}

function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const a = Math.log10(Math.max(lo, 1e-300));
  let b = Math.log10(Math.max(hi, 1e-300));
  if (!(b > a)) b = a + 1;
  const pad = 0.06 * (b - a);
  const aa = a - pad;
  const bb = b + pad;
  const f = ((v: number) =>
    outLo +
    ((Math.log10(Math.max(v, 1e-300)) - aa) / (bb - aa)) * (outHi - outLo)) as Scale;
  const ticks: number[] = [];
  for (let e = Math.ceil(aa); e <= Math.floor(bb); e++) {
    ticks.push(Math.pow(10, e));
  }
  if (ticks.length < 2) {
    ticks.length = 0;
    const step = (bb - aa) / 4;
    for (let k = 0; k <= 4; k++) ticks.push(Math.pow(10, aa + k * step));
  }
  f.ticks = ticks;
  f.label = (v: number) => v.toExponential(0);
  return f;
}

function niceStep(range: number): number {
  const raw = range / 6;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const r = raw / mag;
  const nice = r < 1.5 ? 1 : r < 3.5 ? 2 : r < 7.5 ? 5 : 10;
  return nice * mag;
}

interface Series {
  name: string;
  xs: number[];
  ys: number[];
  color: string;
  markers?: boolean;
}

function axes(
  x: Scale,
  y: Scale,
  title: string,
  xlabel: string,
  ylabel: string
): string {
  const parts: string[] = [];
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  parts.push(
    `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#333" stroke-width="1"/>`
  );
  for (const t of x.ticks) {
    const px = x(t);
    if (px < x0 - 0.5 || px > x1 + 0.5) continue;
    parts.push(
      `<line x1="${px.toFixed(2)}" y1="${y0}" x2="${px.toFixed(2)}" y2="${y0 + 5}" stroke="#333"/>`,
      `<text x="${px.toFixed(2)}" y="${y0 + 18}" font-size="11" text-anchor="middle" fill="#333">${x.label(t)}</text>`
    );
  }
  for (const t of y.ticks) {
    const py = y(t);
    if (py < y1 - 0.5 || py > y0 + 0.5) continue;
    parts.push(
      `<line x1="${x0 - 5}" y1="${py.toFixed(2)}" x2="${x0}" y2="${py.toFixed(2)}" stroke="#333"/>`,
      `<text x="${x0 - 8}" y="${(py + 4).toFixed(2)}" font-size="11" text-anchor="end" fill="#333">${y.label(t)}</text>`
    );
  }
  parts.push(
    `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" font-size="13" text-anchor="middle" fill="#111">${esc(xlabel)}</text>`,
    `<text x="18" y="${(y0 + y1) / 2}" font-size="13" text-anchor="middle" fill="#111" transform="rotate(-90 18 ${(y0 + y1) / 2})">${esc(ylabel)}</text>`,
    `<text x="${(x0 + x1) / 2}" y="24" font-size="15" text-anchor="middle" fill="#111">${esc(title)}</text>`
  );
  return parts.join("\n");
}

function polyline(series: Series, x: Scale, y: Scale): string {
  const pts = series.xs
    .map((v, i) => `${x(v).toFixed(2)},${y(series.ys[i]).toFixed(2)}`)
    .join(" ");
  let out = `<polyline points="${pts}" fill="none" stroke="${series.color}" stroke-width="1.8"/>`;
  if (series.markers) {
    out += series.xs
      .map(
        (v, i) =>
          `<circle cx="${x(v).toFixed(2)}" cy="${y(series.ys[i]).toFixed(2)}" r="3.2" fill="${series.color}"/>`
      )
      .join("");
  }
  return out;
}

function legend(series: Series[]): string {
  const x0 = WIDTH - MARGIN.right - 170;
  let y = MARGIN.top + 14;
  const parts: string[] = [];
  for (const s of series) {
    parts.push(
      `<line x1="${x0}" y1="${y - 4}" x2="${x0 + 22}" y2="${y - 4}" stroke="${s.color}" stroke-width="2"/>`,
      `<text x="${x0 + 28}" y="${y}" font-size="12" fill="#111">${esc(s.name)}</text>`
    );
    y += 17;
  }
  return parts.join("\n");
}

function esc(s: string): string {
  return s
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;");
}

function document(body: string, configHash: string | undefined): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
    `<metadata>bosonlab-plots ${PLOTS_VERSION}${configHash ? ` config_hash=${configHash}` : ""}</metadata>`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
    body,
    `</svg>`,
    ``,
  ].join("\n");
}

function finiteMinMax(values: number[]): [number, number] {
  const good = values.filter((v) => isFinite(v));
  return [Math.min(...good), Math.max(...good)];
}

// --- the four figure kinds ---------------------------------------------------

function renderConvergence(tables: Table[], o: FigureOverrides): string {
  const t = tables[0];
  const ns = column(t, "n_particles");
  const ts = column(t, "t");
  const tr = column(t, "trdist");
  const slope = column(t, "fit_slope").find((v) => isFinite(v));
  const tFinal = Math.max(...ts);
  const pts = new Map<number, number>();
  ns.forEach((n, i) => {
    if (Math.abs(ts[i] - tFinal) < 1e-12 && tr[i] > 0) pts.set(n, tr[i]);
  });
  const xs = [...pts.keys()].sort((a, b) => a - b);
  const ys = xs.map((n) => pts.get(n)!);
  const x = logScale(xs[0], xs[xs.length - 1], MARGIN.left, WIDTH - MARGIN.right);
  const [ylo, yhi] = finiteMinMax(ys);
  const y = logScale(ylo, yhi, HEIGHT - MARGIN.bottom, MARGIN.top);
  const series: Series = {
    name: `Tr|g-P| at t=${fmt(tFinal)}`,
    xs,
    ys,
    color: COLORS[0],
    markers: true,
  };
  const slopeText =
    slope === undefined ? "slope: n/a" : `fitted slope ${fmt(slope)}`;
  const body = [
    axes(x, y, o.title ?? "condensate convergence", o.xlabel ?? "particle number N", o.ylabel ?? "trace distance"),
    polyline(series, x, y),
    `<text x="${MARGIN.left + 12}" y="${MARGIN.top + 18}" font-size="13" fill="#111">${esc(slopeText)}</text>`,
    legend([series]),
  ].join("\n");
  return document(body, t.comments["config_hash"]);
}

function renderGronwall(tables: Table[], o: FigureOverrides): string {
  const t = tables[0];
  const ts = column(t, "t");
  const make = (name: string, col: string, color: string): Series => ({
    name,
    xs: ts,
    ys: column(t, col),
    color,
  });
  const series = [
    make("alpha", "alpha", COLORS[0]),
    make("gamma", "gamma_total", COLORS[1]),
    make("|dVar/dt|", "dvar_dt_abs", COLORS[2]),
  ];
  const finite = series.flatMap((s) => s.ys).filter((v) => isFinite(v));
  const x = linScale(Math.min(...ts), Math.max(...ts), MARGIN.left, WIDTH - MARGIN.right);
  const y = linScale(
    Math.min(0, ...finite),
    Math.max(...finite),
    HEIGHT - MARGIN.bottom,
    MARGIN.top
  );
  const cleaned = series.map((s) => ({
    ...s,
    xs: s.xs.filter((_, i) => isFinite(s.ys[i])),
    ys: s.ys.filter((v) => isFinite(v)),
  }));
  const viol = column(t, "violation");
  const markers = ts
    .map((tv, i) => [tv, viol[i]] as const)
    .filter(([, v]) => v > 0)
    .map(
      ([tv]) =>
        `<line x1="${x(tv).toFixed(2)}" y1="${MARGIN.top}" x2="${x(tv).toFixed(2)}" y2="${HEIGHT - MARGIN.bottom}" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 3"/>`
    )
    .join("\n");
  const body = [
    axes(x, y, o.title ?? "Groenwall quantities", o.xlabel ?? "time", o.ylabel ?? "value"),
    ...cleaned.map((s) => polyline(s, x, y)),
    markers,
    legend(cleaned),
  ].join("\n");
  return document(body, t.comments["config_hash"]);
}

function renderVariance(tables: Table[], o: FigureOverrides): string {
  const t = tables[0];
  const ns = column(t, "n_particles");
  const betas = column(t, "beta");
  const vq = column(t, "var_quad");
  const predicted = column(t, "predicted_slope");
  const fitted = column(t, "fitted_slope");
  const betaValues = [...new Set(betas)].sort((a, b) => a - b);
  const series: Series[] = betaValues.map((b, k) => {
    const idx = betas
      .map((bb, i) => (bb === b ? i : -1))
      .filter((i) => i >= 0)
      .sort((i, j) => ns[i] - ns[j]);
    return {
      name: `beta=${fmt(b)}`,
      xs: idx.map((i) => ns[i]),
      ys: idx.map((i) => Math.abs(vq[i])),
      color: COLORS[k % COLORS.length],
      markers: true,
    };
  });
  const allX = series.flatMap((s) => s.xs);
  const allY = series.flatMap((s) => s.ys).filter((v) => v > 0);
  const x = logScale(Math.min(...allX), Math.max(...allX), MARGIN.left, WIDTH - MARGIN.right);
  const y = logScale(Math.min(...allY), Math.max(...allY), HEIGHT - MARGIN.bottom, MARGIN.top);
  const notes = betaValues
    .map((b, k) => {
      const i = betas.indexOf(b);
      return `<text x="${MARGIN.left + 12}" y="${MARGIN.top + 18 + 16 * k}" font-size="12" fill="#111">${esc(
        `beta=${fmt(b)}: fitted ${fmt(fitted[i])}, predicted ${fmt(predicted[i])}`
      )}</text>`;
    })
    .join("\n");
  const body = [
    axes(x, y, o.title ?? "product-state energy variance", o.xlabel ?? "particle number N", o.ylabel ?? "Var"),
    ...series.map((s) => polyline(s, x, y)),
    notes,
    legend(series),
  ].join("\n");
  return document(body, t.comments["config_hash"]);
}

function renderBlowup(tables: Table[], o: FigureOverrides): string {
  const names = tables.length > 1 ? ["run A", "run B"] : ["run"];
  const series: Series[] = [];
  let markers = "";
  const allT: number[] = [];
  const allV: number[] = [];
  tables.forEach((t, k) => {
    const ts = column(t, "t");
    const sup = column(t, "sup_norm");
    const grad = column(t, "grad_l2");
    allT.push(...ts);
    allV.push(...sup.filter(isFinite), ...grad.filter(isFinite));
    series.push(
      { name: `${names[k]} sup|phi|`, xs: ts, ys: sup, color: COLORS[2 * k], markers: true },
      { name: `${names[k]} |grad phi|`, xs: ts, ys: grad, color: COLORS[2 * k + 1] }
    );
  });
  const x = linScale(Math.min(...allT), Math.max(...allT), MARGIN.left, WIDTH - MARGIN.right);
  const y = logScale(
    Math.max(Math.min(...allV), 1e-12),
    Math.max(...allV),
    HEIGHT - MARGIN.bottom,
    MARGIN.top
  );
  tables.forEach((t) => {
    const ts = column(t, "t");
    const blown = column(t, "blown");
    const first = ts.find((_, i) => blown[i] > 0);
    if (first !== undefined) {
      markers += `<line x1="${x(first).toFixed(2)}" y1="${MARGIN.top}" x2="${x(first).toFixed(2)}" y2="${HEIGHT - MARGIN.bottom}" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 3"/>`;
      markers += `<text x="${(x(first) + 4).toFixed(2)}" y="${MARGIN.top + 14}" font-size="11" fill="#d62728">detected t=${fmt(first)}</text>`;
    }
  });
  const body = [
    axes(x, y, o.title ?? "collapse diagnostics", o.xlabel ?? "time", o.ylabel ?? "norm"),
    ...series.map((s) => polyline(s, x, y)),
    markers,
    legend(series),
  ].join("\n");
  return document(body, tables[0].comments["config_hash"]);
}

export function render(
  kind: FigureKind,
  tables: Table[],
  overrides: FigureOverrides = {}
): string {
  for (const t of tables) {
    requireColumns(t, REQUIRED_COLUMNS[kind]);
  }
  switch (kind) {
    case "convergence":
      return renderConvergence(tables, overrides);
    case "gronwall_timeseries":
      return renderGronwall(tables, overrides);
    case "variance_scaling":
      return renderVariance(tables, overrides);
    case "blowup_panel":
      return renderBlowup(tables, overrides);
  }
}
