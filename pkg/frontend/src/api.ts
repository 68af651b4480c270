/** Typed client for the corridorctl HTTP service.
 *
 * Payload shapes mirror the server's JSON exactly; nothing is re-derived
 * client side. The recommendation endpoint in particular is the single
 * source of truth for "which scenario does orientation (w, p) pick" -- the
 * console renders whatever it returns.
 */

export type PNorm = number | "inf";

export interface RunSummary {
  run_id: string;
  issued_at: string;
  now_minute: number;
  mode: string;
  delta_t_min: number | null;
  n_scenarios: number;
}

export interface ScenarioRow {
  id: string;
  vsl_id: string;
  limits_kmh: number[];
  a?: number;
  b?: number;
  inflow_veh_min?: number[];
  throughput_veh_min: number;
  mean_speed_kmh: number;
  scaled_throughput: number;
  scaled_speed: number;
  pareto: boolean;
  flags: string[];
  throughput_improvement?: number;
  speed_improvement?: number;
}

export interface SelectionRow {
  w: number;
  p: PNorm;
  scenario_id: string;
  distance: number;
  point: [number, number];
}

export interface SpeedFieldDoc {
  t0: string;
  values: (number | null)[][];
}

export interface RunDetail {
  run_id: string;
  issued_at: string;
  now_minute: number;
  mode: string;
  delta_t_min: number | null;
  inputs_digest: string;
  config: Record<string, unknown>;
  assimilation: Record<string, unknown>;
  scenarios: ScenarioRow[];
  selections: SelectionRow[];
  fields: Record<string, SpeedFieldDoc>;
  flags: string[];
  timing_s: number;
}

export interface Recommendation {
  run_id: string;
  w: number;
  p: PNorm;
  scenario_id: string;
  distance: number;
  scenario: ScenarioRow;
}

export interface HealthDoc {
  status: string;
  n_minutes: number;
  n_runs: number;
}

export interface CycleRequest {
  now_minute?: number;
  mode?: string;
  seeds_per_scenario?: number;
  base_seed?: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function decode<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = `HTTP ${res.status}`;
    try {
      const body = (await res.json()) as { detail?: unknown };
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body, keep the status line
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (...a) => fetch(...a),
  ) {}

  private get<T>(path: string): Promise<T> {
    return this.fetchFn(this.base + path).then((res) => decode<T>(res));
  }

  health(): Promise<HealthDoc> {
    return this.get("/health");
  }

  listRuns(): Promise<RunSummary[]> {
    return this.get<{ runs: RunSummary[] }>("/runs").then((d) => d.runs);
  }

  run(runId: string): Promise<RunDetail> {
    return this.get(`/runs/${encodeURIComponent(runId)}`);
  }

  /** Server-side selection for one orientation; p is "inf" for the max norm. */
  recommendation(runId: string, w: number, p: PNorm): Promise<Recommendation> {
    const q = `w=${encodeURIComponent(String(w))}&p=${encodeURIComponent(String(p))}`;
    return this.get(`/runs/${encodeURIComponent(runId)}/recommendation?${q}`);
  }

  speedField(runId: string, scenario: string): Promise<SpeedFieldDoc> {
    const path = `/runs/${encodeURIComponent(runId)}/speedfield` +
      `?scenario=${encodeURIComponent(scenario)}`;
    return this.get<{ field: SpeedFieldDoc }>(path).then((d) => d.field);
  }

  trigger(req: CycleRequest): Promise<RunDetail> {
    return this.fetchFn(this.base + "/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    }).then((res) => decode<RunDetail>(res));
  }
}
