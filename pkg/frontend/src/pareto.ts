/** Pareto scatter in scaled objective space, rendered as an SVG string.
 *
 * x is scaled throughput, y is scaled mean speed, the ideal sits at (1, 1).
 * Dominated points are muted, front points accented, and the single picked
 * scenario (whatever the server recommended) gets the "picked" class plus an
 * iso-distance contour through it for the active orientation. Rendering is a
 * pure function of its inputs so it can be tested without a DOM.
 */

import { PNorm, Recommendation, ScenarioRow } from "./api.js";

export interface ParetoOptions {
  width: number;
  height: number;
  margin: number;
}

const DEFAULTS: ParetoOptions = { width: 520, height: 420, margin: 48 };

// Arm length cap for degenerate w=0 / w=1 contours; SVG clips the overshoot.
const FAR = 1e3;

type Scale = (v: number) => number;

function linScale(d0: number, d1: number, r0: number, r1: number): Scale {
  const k = (r1 - r0) / (d1 - d0);
  return (v) => r0 + (v - d0) * k;
}

function fmt(v: number): string {
  return Number.isFinite(v) ? String(Math.round(v * 100) / 100) : "0";
}

/** Locus of points at weighted distance `d` from the ideal (1, 1).
 *
 * Finite p uses the superellipse parametrisation of the p-ball; p = "inf"
 * is the L-shaped corner. Only the quadrant below and left of the ideal is
 * drawn, which is where evaluated scenarios live.
 */
export function isoContour(
  w: number,
  p: PNorm,
  d: number,
  samples = 65,
): Array<[number, number]> {
  const rx = Math.min(d / Math.max(w, 1e-12), FAR);
  const ry = Math.min(d / Math.max(1 - w, 1e-12), FAR);
  if (p === "inf") {
    return [
      [1 - rx, 1],
      [1 - rx, 1 - ry],
      [1, 1 - ry],
    ];
  }
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < samples; i++) {
    const t = (Math.PI / 2) * (i / (samples - 1));
    const dx = rx * Math.cos(t) ** (2 / p);
    const dy = ry * Math.sin(t) ** (2 / p);
    pts.push([1 - dx, 1 - dy]);
  }
  return pts;
}

export function renderPareto(
  rows: ScenarioRow[],
  picked: Recommendation | null,
  opts: Partial<ParetoOptions> = {},
): string {
  const { width, height, margin } = { ...DEFAULTS, ...opts };
  const xs = rows.map((r) => r.scaled_throughput).concat([1]);
  const ys = rows.map((r) => r.scaled_speed).concat([1]);
  const pad = 0.08;
  const xLo = Math.min(...xs) - pad;
  const xHi = Math.max(...xs) + pad;
  const yLo = Math.min(...ys) - pad;
  const yHi = Math.max(...ys) + pad;
  const sx = linScale(xLo, xHi, margin, width - margin / 2);
  const sy = linScale(yLo, yHi, height - margin, margin / 2);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `class="pareto-plot" role="img">`,
  );

  // axes with a handful of ticks
  const axisY = height - margin;
  parts.push(
    `<line class="axis" x1="${margin}" y1="${axisY}" x2="${width - margin / 2}" y2="${axisY}"/>`,
    `<line class="axis" x1="${margin}" y1="${axisY}" x2="${margin}" y2="${margin / 2}"/>`,
  );
  for (let i = 0; i <= 4; i++) {
    const vx = xLo + ((xHi - xLo) * i) / 4;
    const vy = yLo + ((yHi - yLo) * i) / 4;
    parts.push(
      `<text class="tick" x="${fmt(sx(vx))}" y="${axisY + 16}" text-anchor="middle">${fmt(vx)}</text>`,
      `<text class="tick" x="${margin - 6}" y="${fmt(sy(vy) + 4)}" text-anchor="end">${fmt(vy)}</text>`,
    );
  }
  parts.push(
    `<text class="axis-label" x="${(width + margin) / 2}" y="${height - 10}" ` +
      `text-anchor="middle">scaled throughput</text>`,
    `<text class="axis-label" x="14" y="${height / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 14 ${height / 2})">scaled mean speed</text>`,
  );

  // iso-distance contour through the picked point, current orientation
  if (picked !== null && picked.distance > 0) {
    const path = isoContour(picked.w, picked.p, picked.distance)
      .map(([x, y], i) => `${i === 0 ? "M" : "L"}${fmt(sx(x))} ${fmt(sy(y))}`)
      .join(" ");
    parts.push(`<path class="contour" d="${path}" fill="none"/>`);
  }

  // ideal marker
  const ix = sx(1);
  const iy = sy(1);
  parts.push(
    `<path class="ideal" d="M${ix - 6} ${iy} L${ix + 6} ${iy} M${ix} ${iy - 6} L${ix} ${iy + 6}"/>`,
  );

  // points; the picked one is whatever the server said, nothing is recomputed
  for (const row of rows) {
    const classes = ["pt"];
    if (row.pareto) classes.push("front");
    if (picked !== null && row.id === picked.scenario_id) classes.push("picked");
    const r = classes.includes("picked") ? 7 : row.pareto ? 5 : 3.5;
    parts.push(
      `<circle class="${classes.join(" ")}" data-id="${row.id}" ` +
        `cx="${fmt(sx(row.scaled_throughput))}" cy="${fmt(sy(row.scaled_speed))}" r="${r}">` +
        `<title>${row.id}: ${fmt(row.throughput_veh_min)} veh/min, ` +
        `${fmt(row.mean_speed_kmh)} km/h</title></circle>`,
    );
  }

  if (picked !== null) {
    parts.push(
      `<text class="picked-label" x="${width - margin / 2}" y="${margin / 2 + 4}" ` +
        `text-anchor="end">picked: ${picked.scenario_id}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
