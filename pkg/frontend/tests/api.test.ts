import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";

function fakeFetch(status: number, body: unknown) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fn = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fn, calls };
}

describe("ApiClient", () => {
  it("posts feedback with the JSON payload", async () => {
    const { fn, calls } = fakeFetch(200, { session_id: "s0000", open: true });
    const api = new ApiClient("http://x", fn);
    await api.postFeedback("s0000", { kind: "m" });
    expect(calls[0].url).toBe("http://x/sessions/s0000/feedback");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({ kind: "m" });
  });

  it("posts manual operator payloads", async () => {
    const { fn, calls } = fakeFetch(200, {});
    const api = new ApiClient("http://x", fn);
    await api.postFeedback("s0000", { kind: "u", manual_operator: "blank" });
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      kind: "u",
      manual_operator: "blank",
    });
  });

  it("creates sessions with an optional seed", async () => {
    const { fn, calls } = fakeFetch(200, { session_id: "s0000", view: {} });
    const api = new ApiClient("http://x", fn);
    await api.createSession(42);
    expect(calls[0].url).toBe("http://x/sessions");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({ seed: 42 });
    await api.createSession();
    expect(JSON.parse(calls[1].init?.body as string)).toEqual({});
  });

  it("maps error bodies onto ApiError", async () => {
    const { fn } = fakeFetch(409, { detail: "session is closed" });
    const api = new ApiClient("http://x", fn);
    await expect(api.postFeedback("s0000", { kind: "m" })).rejects.toMatchObject({
      status: 409,
      detail: "session is closed",
    });
  });

  it("builds resumable event URLs", () => {
    const api = new ApiClient("http://x");
    expect(api.eventsUrl("s0001", 7)).toBe("http://x/sessions/s0001/events?after=7");
  });

  it("throws ApiError instances", async () => {
    const { fn } = fakeFetch(404, { detail: "unknown session" });
    const api = new ApiClient("http://x", fn);
    await expect(api.getView("nope")).rejects.toBeInstanceOf(ApiError);
  });
});
