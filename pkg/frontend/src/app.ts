/** DOM wiring: connects controls to the store and repaints on every change.
 *
 * The orientation slider snaps to five weight stops; each move asks the
 * server for its recommendation and the plot highlights exactly that answer.
 */

import { ApiClient } from "./api.js";
import { renderHeatmap } from "./heatmap.js";
import { renderPareto } from "./pareto.js";
import { ConsoleStore } from "./state.js";

export const W_STOPS = [0, 0.25, 0.5, 0.75, 1] as const;

function el<T extends HTMLElement>(root: Document, id: string): T {
  const node = root.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export function init(root: Document, api?: ApiClient): ConsoleStore {
  const client = api ?? new ApiClient("");
  const store = new ConsoleStore(client);

  const runSelect = el<HTMLSelectElement>(root, "run-select");
  const wSlider = el<HTMLInputElement>(root, "w-slider");
  const wReadout = el<HTMLElement>(root, "w-readout");
  const pSelect = el<HTMLSelectElement>(root, "p-select");
  const scenarioSelect = el<HTMLSelectElement>(root, "scenario-select");
  const paretoBox = el<HTMLElement>(root, "pareto-box");
  const heatmapBox = el<HTMLElement>(root, "heatmap-box");
  const statusLine = el<HTMLElement>(root, "status-line");
  const refreshBtn = el<HTMLButtonElement>(root, "refresh-btn");
  const cycleBtn = el<HTMLButtonElement>(root, "cycle-btn");

  const currentW = () => W_STOPS[Number(wSlider.value)] ?? 0.5;
  const currentP = () => (pSelect.value === "inf" ? "inf" : Number(pSelect.value));

  runSelect.addEventListener("change", () => {
    if (runSelect.value) void store.openRun(runSelect.value);
  });
  wSlider.addEventListener("input", () => {
    void store.setOrientation(currentW(), currentP());
  });
  pSelect.addEventListener("change", () => {
    void store.setOrientation(currentW(), currentP());
  });
  scenarioSelect.addEventListener("change", () => {
    void store.showField(scenarioSelect.value);
  });
  refreshBtn.addEventListener("click", () => void store.refreshRuns());
  cycleBtn.addEventListener("click", () => {
    cycleBtn.disabled = true;
    client
      .trigger({})
      .then((record) =>
        store.refreshRuns().then(() => store.openRun(record.run_id)),
      )
      .catch((err) => {
        statusLine.textContent = err instanceof Error ? err.message : String(err);
      })
      .finally(() => {
        cycleBtn.disabled = false;
      });
  });

  store.subscribe((state) => {
    wReadout.textContent = `w = ${state.w}`;

    const options = state.runs
      .map(
        (r) =>
          `<option value="${r.run_id}">min ${r.now_minute} · ${r.mode} · ${r.run_id.slice(0, 8)}</option>`,
      )
      .join("");
    if (runSelect.innerHTML !== options) {
      const keep = runSelect.value;
      runSelect.innerHTML = options;
      if (keep) runSelect.value = keep;
    }

    if (state.run !== null) {
      const scenarioOptions = ["observed", ...state.run.scenarios.map((s) => s.id)]
        .map((id) => `<option value="${id}">${id}</option>`)
        .join("");
      if (scenarioSelect.innerHTML !== scenarioOptions) {
        scenarioSelect.innerHTML = scenarioOptions;
        scenarioSelect.value = state.fieldScenario;
      }
      paretoBox.innerHTML = renderPareto(state.run.scenarios, state.recommendation);
    } else {
      paretoBox.innerHTML = "";
    }

    heatmapBox.innerHTML = state.field !== null ? renderHeatmap(state.field) : "";

    if (state.error !== null) {
      statusLine.textContent = `error: ${state.error}`;
    } else if (state.pending > 0) {
      statusLine.textContent = "loading…";
    } else if (state.recommendation !== null) {
      statusLine.textContent =
        `server picks ${state.recommendation.scenario_id} ` +
        `(distance ${state.recommendation.distance.toFixed(4)})`;
    } else {
      statusLine.textContent = "pick a run";
    }
  });

  void store.refreshRuns().then(() => {
    const latest = store.state.runs[store.state.runs.length - 1];
    if (latest) {
      runSelect.value = latest.run_id;
      void store.openRun(latest.run_id);
    }
  });
  return store;
}

// auto-start in the browser; tests import the pieces directly instead
if (typeof document !== "undefined" && document.getElementById("console-root")) {
  init(document);
}
