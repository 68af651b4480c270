/** Console state container.
 *
 * Every async action is tagged with a sequence number per facet; a response
 * only lands if no newer request for the same facet was issued meanwhile
 * (last write wins). Dragging the orientation slider therefore never shows
 * a stale recommendation, regardless of response ordering.
 */

import {
  ApiClient,
  PNorm,
  Recommendation,
  RunDetail,
  RunSummary,
  SpeedFieldDoc,
} from "./api.js";

/** The slice of the client the store needs; lets tests pass plain objects. */
export type ApiLike = Pick<
  ApiClient,
  "listRuns" | "run" | "recommendation" | "speedField"
>;

export interface ConsoleState {
  runs: RunSummary[];
  run: RunDetail | null;
  w: number;
  p: PNorm;
  recommendation: Recommendation | null;
  fieldScenario: string;
  field: SpeedFieldDoc | null;
  error: string | null;
  pending: number;
}

type Listener = (state: ConsoleState) => void;
type Facet = "runs" | "run" | "rec" | "field";

export class ConsoleStore {
  readonly state: ConsoleState = {
    runs: [],
    run: null,
    w: 0.5,
    p: 1,
    recommendation: null,
    fieldScenario: "observed",
    field: null,
    error: null,
    pending: 0,
  };

  private seq: Record<Facet, number> = { runs: 0, run: 0, rec: 0, field: 0 };
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiLike) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  /** Run `work`, committing via `apply` only if still the newest for `facet`. */
  private async guarded<T>(
    facet: Facet,
    work: () => Promise<T>,
    apply: (value: T) => void,
  ): Promise<void> {
    const ticket = ++this.seq[facet];
    this.state.pending += 1;
    this.emit();
    try {
      const value = await work();
      if (ticket === this.seq[facet]) {
        apply(value);
        this.state.error = null;
      }
    } catch (err) {
      if (ticket === this.seq[facet]) {
        this.state.error = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.state.pending -= 1;
      this.emit();
    }
  }

  refreshRuns(): Promise<void> {
    return this.guarded("runs", () => this.api.listRuns(), (runs) => {
      this.state.runs = runs;
    });
  }

  /** Load a run and immediately resolve the current orientation against it. */
  async openRun(runId: string): Promise<void> {
    await this.guarded("run", () => this.api.run(runId), (run) => {
      this.state.run = run;
      this.state.recommendation = null;
      this.state.field = run.fields[this.state.fieldScenario] ?? null;
    });
    if (this.state.run?.run_id === runId) {
      await this.setOrientation(this.state.w, this.state.p);
    }
  }

  /** Ask the server which scenario orientation (w, p) picks. */
  setOrientation(w: number, p: PNorm): Promise<void> {
    this.state.w = w;
    this.state.p = p;
    const run = this.state.run;
    if (run === null) return Promise.resolve();
    return this.guarded(
      "rec",
      () => this.api.recommendation(run.run_id, w, p),
      (rec) => {
        this.state.recommendation = rec;
      },
    );
  }

  showField(scenario: string): Promise<void> {
    this.state.fieldScenario = scenario;
    const run = this.state.run;
    if (run === null) return Promise.resolve();
    if (scenario in run.fields) {
      // record already carries the field, no round trip needed
      this.state.field = run.fields[scenario];
      this.emit();
      return Promise.resolve();
    }
    return this.guarded(
      "field",
      () => this.api.speedField(run.run_id, scenario),
      (field) => {
        this.state.field = field;
      },
    );
  }
}
