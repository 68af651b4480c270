import { Recommendation, RunDetail, ScenarioRow } from "../src/api.js";

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function scenarioRow(
  id: string,
  scaledQ: number,
  scaledV: number,
  pareto: boolean,
): ScenarioRow {
  return {
    id,
    vsl_id: id,
    limits_kmh: [80, 100],
    throughput_veh_min: scaledQ * 44.14,
    mean_speed_kmh: scaledV * 90,
    scaled_throughput: scaledQ,
    scaled_speed: scaledV,
    pareto,
    flags: [],
  };
}

// Dominance worked out by hand: AlsVsl2 loses to AlsVsl, Comb2 to Comb1.
export const ROWS: ScenarioRow[] = [
  scenarioRow("NoControl", 0.55, 0.96, true),
  scenarioRow("PlVsl", 0.62, 0.9, true),
  scenarioRow("AlsVsl", 0.7, 0.78, true),
  scenarioRow("AlsVsl2", 0.66, 0.7, false),
  scenarioRow("Comb1", 0.8, 0.6, true),
  scenarioRow("Comb2", 0.76, 0.52, false),
];

export function runDetail(runId: string, rows: ScenarioRow[] = ROWS): RunDetail {
  return {
    run_id: runId,
    issued_at: "2024-05-01T06:00:00",
    now_minute: 30,
    mode: "vsl_only",
    delta_t_min: null,
    inputs_digest: "0".repeat(16),
    config: {},
    assimilation: {},
    scenarios: rows,
    selections: [],
    fields: {
      observed: {
        t0: "2024-05-01T05:30:00",
        values: [
          [62.1, 58.4],
          [44.0, 31.2],
        ],
      },
    },
    flags: [],
    timing_s: 1.25,
  };
}

export function recommendationFor(
  runId: string,
  w: number,
  scenarioId: string,
  rows: ScenarioRow[] = ROWS,
): Recommendation {
  const row = rows.find((r) => r.id === scenarioId);
  if (row === undefined) throw new Error(`no fixture row ${scenarioId}`);
  return {
    run_id: runId,
    w,
    p: 1,
    scenario_id: scenarioId,
    distance: w * (1 - row.scaled_throughput) + (1 - w) * (1 - row.scaled_speed),
    scenario: row,
  };
}

/** data-ids of circles carrying the "picked" class in a rendered plot. */
export function pickedIds(svg: string): string[] {
  const out: string[] = [];
  for (const m of svg.matchAll(/<circle class="([^"]*)" data-id="([^"]*)"/g)) {
    if (m[1].split(" ").includes("picked")) out.push(m[2]);
  }
  return out;
}
