import { describe, expect, it } from "vitest";

import type { NegotiationViewJson, PreviewCardJson, RouteJson } from "../src/api.js";
import { parseNdjson } from "../src/api.js";
import { FeedConnection } from "../src/feed.js";
import { MonitorState } from "../src/monitor.js";
import { buildSlideshow } from "../src/negotiate.js";
import { fixture, fixtureJson } from "./helpers.js";

// End-to-end checks against a recorded session: everything on screen must be
// exactly what the service said, replayed through the same plumbing the live
// dashboard uses.

describe("recorded session on the dashboard", () => {
  it("renders the final walker position equal to the last snapshot", async () => {
    const envelopes = parseNdjson(fixture("session.ndjson"));
    const monitor = new MonitorState(envelopes[0]!.session_id, fixtureJson<RouteJson>("route.json"));
    const conn = new FeedConnection(
      async (_id, fromSeq) => envelopes.filter((e) => e.seq >= fromSeq).slice(0, 4),
      monitor.sessionId,
      (e) => monitor.push(e),
    );
    while ((await conn.poll()) > 0) {
      // drain the recording in pages, like a live tail would
    }

    const view = monitor.render({ status: conn.status, lastSeq: conn.lastSeq });
    const lastSnapshot = [...envelopes].reverse().find((e) => e.position !== null)!.position;
    expect(view.walker).toStrictEqual(lastSnapshot);
    expect(view.sessionEnded).toBe(true);
    expect(view.feed).toEqual({ status: "ended", lastSeq: envelopes.length - 1 });
  });

  it("raises the help banner from the recorded request", () => {
    const envelopes = parseNdjson(fixture("session.ndjson"));
    const monitor = new MonitorState(envelopes[0]!.session_id);
    for (const e of envelopes) monitor.push(e);

    const help = monitor.render().banners.filter((b) => b.kind === "help");
    expect(help.length).toBe(1);
    expect(help[0]!.message).toContain("help requested");
  });

  it("shows the preview card exactly as the service previews it", () => {
    const negotiation = fixtureJson<NegotiationViewJson>("negotiation.json");
    const route = fixtureJson<RouteJson>("route_curated.json");
    const preview = fixtureJson<PreviewCardJson>("preview.json");

    const card = buildSlideshow(negotiation, route).previewCard;
    expect(card).toStrictEqual(preview);
    expect(card.payload).toStrictEqual(preview.payload);
  });
});
