import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, FetchLike } from "../src/api.js";
import { jsonResponse, runDetail } from "./helpers.js";

function recordingFetch(
  handler: (url: string, init?: RequestInit) => Response,
): { fetchFn: FetchLike; calls: Array<{ url: string; init?: RequestInit }> } {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({ url, init });
    return handler(url, init);
  };
  return { fetchFn, calls };
}

describe("ApiClient", () => {
  it("prefixes the base URL and parses /health", async () => {
    const { fetchFn, calls } = recordingFetch(() =>
      jsonResponse({ status: "ok", n_minutes: 60, n_runs: 3 }),
    );
    const api = new ApiClient("http://svc:8732", fetchFn);
    const health = await api.health();
    expect(calls[0].url).toBe("http://svc:8732/health");
    expect(health.n_minutes).toBe(60);
  });

  it("unwraps the runs envelope", async () => {
    const summary = {
      run_id: "abc",
      issued_at: "t",
      now_minute: 30,
      mode: "vsl_only",
      delta_t_min: null,
      n_scenarios: 4,
    };
    const { fetchFn } = recordingFetch(() => jsonResponse({ runs: [summary] }));
    const runs = await new ApiClient("", fetchFn).listRuns();
    expect(runs).toEqual([summary]);
  });

  it("serialises orientation params, including the max norm as inf", async () => {
    const rec = {
      run_id: "abc",
      w: 0.25,
      p: "inf",
      scenario_id: "PlVsl",
      distance: 0.1,
      scenario: runDetail("abc").scenarios[1],
    };
    const { fetchFn, calls } = recordingFetch(() => jsonResponse(rec));
    const api = new ApiClient("", fetchFn);
    await api.recommendation("abc", 0.25, 2);
    await api.recommendation("abc", 0.25, "inf");
    expect(calls[0].url).toBe("/runs/abc/recommendation?w=0.25&p=2");
    expect(calls[1].url).toBe("/runs/abc/recommendation?w=0.25&p=inf");
  });

  it("unwraps speed fields and escapes the scenario name", async () => {
    const field = { t0: "2024-05-01T05:30:00", values: [[50.0]] };
    const { fetchFn, calls } = recordingFetch(() =>
      jsonResponse({ run_id: "abc", scenario: "x", field }),
    );
    const got = await new ApiClient("", fetchFn).speedField("abc", "PlVsl+inflow");
    expect(got).toEqual(field);
    expect(calls[0].url).toContain("scenario=PlVsl%2Binflow");
  });

  it("turns structured error bodies into ApiError with the server detail", async () => {
    const { fetchFn } = recordingFetch(() =>
      jsonResponse({ detail: "no run 'zz'" }, 404),
    );
    const err = await new ApiClient("", fetchFn).run("zz").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).message).toBe("no run 'zz'");
  });

  it("falls back to the status code when the error body is not JSON", async () => {
    const { fetchFn } = recordingFetch(
      () => new Response("boom", { status: 500 }),
    );
    const err = await new ApiClient("", fetchFn).health().catch((e) => e);
    expect((err as ApiError).message).toBe("HTTP 500");
  });

  it("POSTs cycle requests as JSON", async () => {
    const doc = runDetail("fresh");
    const { fetchFn, calls } = recordingFetch(() => jsonResponse(doc, 201));
    const got = await new ApiClient("", fetchFn).trigger({ now_minute: 45 });
    expect(got.run_id).toBe("fresh");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ now_minute: 45 });
  });
});
