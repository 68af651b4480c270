/** Time-space speed heatmap as an SVG string.
 *
 * Minutes run left to right, segments top to bottom (upstream at the top).
 * Cells below the congestion threshold get the "congested" class and a
 * stroke so queues read as a contiguous region; missing cells are hatched.
 */

import { SpeedFieldDoc } from "./api.js";

export const CONGESTED_KMH = 40;

export interface HeatmapOptions {
  width: number;
  height: number;
  margin: number;
}

const DEFAULTS: HeatmapOptions = { width: 640, height: 320, margin: 36 };

export function congestedMask(values: (number | null)[][]): boolean[][] {
  return values.map((row) =>
    row.map((v) => v !== null && Number.isFinite(v) && v < CONGESTED_KMH),
  );
}

/** Green at free flow through yellow to red near standstill. */
export function speedColor(v: number): string {
  const clamped = Math.max(0, Math.min(v, 110));
  const hue = (clamped / 110) * 120;
  return `hsl(${Math.round(hue)} 72% 46%)`;
}

export function renderHeatmap(
  field: SpeedFieldDoc,
  opts: Partial<HeatmapOptions> = {},
): string {
  const { width, height, margin } = { ...DEFAULTS, ...opts };
  const nMin = field.values.length;
  const nSeg = nMin > 0 ? field.values[0].length : 0;
  if (nMin === 0 || nSeg === 0) {
    return `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="heatmap"></svg>`;
  }
  const cw = (width - 2 * margin) / nMin;
  const ch = (height - 2 * margin) / nSeg;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `class="heatmap" role="img">`,
    `<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse">` +
      `<path d="M0 6 L6 0" stroke="#999" stroke-width="1"/></pattern></defs>`,
  );

  for (let m = 0; m < nMin; m++) {
    for (let s = 0; s < nSeg; s++) {
      const v = field.values[m][s];
      const x = (margin + m * cw).toFixed(2);
      const y = (margin + s * ch).toFixed(2);
      const missing = v === null || !Number.isFinite(v);
      const classes = ["cell"];
      let fill: string;
      if (missing) {
        classes.push("missing");
        fill = "url(#hatch)";
      } else {
        if (v < CONGESTED_KMH) classes.push("congested");
        fill = speedColor(v);
      }
      parts.push(
        `<rect class="${classes.join(" ")}" data-m="${m}" data-s="${s}" ` +
          `data-v="${missing ? "" : v}" x="${x}" y="${y}" ` +
          `width="${cw.toFixed(2)}" height="${ch.toFixed(2)}" fill="${fill}"/>`,
      );
    }
  }

  // sparse minute labels so long horizons stay readable
  const labelEvery = Math.max(1, Math.ceil(nMin / 12));
  for (let m = 0; m < nMin; m += labelEvery) {
    parts.push(
      `<text class="tick" x="${(margin + (m + 0.5) * cw).toFixed(2)}" ` +
        `y="${height - margin + 14}" text-anchor="middle">${m}</text>`,
    );
  }
  parts.push(
    `<text class="axis-label" x="${width / 2}" y="${height - 6}" ` +
      `text-anchor="middle">minute</text>`,
    `<text class="axis-label" x="12" y="${height / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 12 ${height / 2})">segment</text>`,
    "</svg>",
  );
  return parts.join("");
}
