// Wire types mirror the service JSON field for field; snake_case is kept so
// a fixture or live response can be asserted against without mapping layers.

export interface LatLon {
  lat: number;
  lon: number;
}

export interface Snapshot {
  ts_ms: number;
  lat: number;
  lon: number;
  along_m: number;
  cross_m: number;
  watermark_m: number;
  on_track: boolean;
}

export interface TrainingEvent {
  ts_ms: number;
  session_id: string;
  seq: number;
  type: string;
  payload: Record<string, unknown>;
}

export interface FeedEnvelope {
  session_id: string;
  seq: number;
  event: TrainingEvent;
  position: Snapshot | null;
}

export interface PoiJson {
  id: string;
  lat: number;
  lon: number;
  ts_ms: number;
  kind: string;
  status: string;
  radius_m: number;
  photos: string[];
  instruction: string;
  notes: string;
  symbol?: string;
  audio?: string;
}

export interface SubPathJson {
  start_m: number;
  end_m: number;
  mode: string;
}

export interface RouteJson {
  id: string;
  way_id: string;
  status: string;
  version: number;
  geometry: LatLon[];
  pois: PoiJson[];
  subpaths: SubPathJson[];
}

export interface WayJson {
  id: string;
  origin_label: string;
  origin: LatLon;
  destination_label: string;
  destination: LatLon;
  owner_user_id: string;
  direction_note: string;
}

export interface ErwFixJson {
  ts_ms: number;
  lat: number;
  lon: number;
  accuracy_m: number | null;
}

export interface ErwSessionJson {
  id: string;
  way_id: string;
  started_ts: number;
  state: string;
  fixes: ErwFixJson[];
  candidate_pois: PoiJson[];
  capture_roles: [string, string][];
  video_ref: string | null;
  ended_ts: number | null;
}

export interface PreviewCardJson {
  poi_id: string;
  payload: Record<string, unknown>;
  preview_only: boolean;
}

export interface NegotiationRecordJson {
  poi_id: string;
  decided: string | null;
  selected_photo: string | null;
  instruction_approved: boolean;
  flagged_photos: string[];
  annotations: string[];
}

export interface NegotiationViewJson {
  id: string;
  route_id: string;
  cursor: number;
  all_decided: boolean;
  records: NegotiationRecordJson[];
  current: PreviewCardJson;
}

export interface CountersJson {
  decision_points: number;
  correct: number;
  assists: number;
  off_track: number;
  self_recoveries: number;
  reports: number;
  poi_entries: number;
  route_km: number;
}

export interface SubpathIndicatorsJson {
  start_m: number;
  end_m: number;
  mode: string;
  counters: CountersJson;
  accuracy: number | null;
  recovery: number | null;
}

export interface IndicatorsJson {
  session_id: string;
  autonomy: number;
  accuracy: number | null;
  error_rate_per_km: number;
  recovery: number | null;
  confidence: number | null;
  counters: CountersJson;
  subpaths: SubpathIndicatorsJson[];
}

export interface TrendPointJson extends IndicatorsJson {
  ended_ts: number;
  route_version: number;
  flags: string[];
}

export interface TrendDeltaJson {
  from: string;
  to: string;
  autonomy: number | null;
  accuracy: number | null;
  error_rate_per_km: number | null;
  recovery: number | null;
}

export interface SuggestionJson {
  kind: "support_mode" | "supervision";
  subpath: [number, number] | null;
  current: string;
  suggested: string;
  reason: string;
}

export interface TrendJson {
  way_id: string;
  series: TrendPointJson[];
  deltas: TrendDeltaJson[];
  suggestions: SuggestionJson[];
}

export type EditBody = Record<string, unknown> & { op: string };

export type NegotiationActionName =
  | "Next"
  | "Prev"
  | "Confirm"
  | "Reject"
  | "SelectPhoto"
  | "ApproveInstruction"
  | "FlagPhoto"
  | "Annotate";

// Minimal structural view of fetch so tests can hand in a stub and the
// browser / node implementations both satisfy it.
export interface FetchLike {
  (url: string, init?: { method?: string; headers?: Record<string, string>; body?: string }): Promise<{
    ok: boolean;
    status: number;
    text(): Promise<string>;
  }>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string,
  ) {
    super(`${error}: ${detail}`);
  }
}

export function parseNdjson(text: string): FeedEnvelope[] {
  return text
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as FeedEnvelope);
}

/** Thin client over the training service. Holds no state beyond the base URL. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (globalThis as unknown as { fetch: FetchLike }).fetch,
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<string> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await res.text();
    if (!res.ok) {
      let error = "HttpError";
      let detail = text;
      try {
        const parsed = JSON.parse(text) as { error?: string; detail?: string };
        if (typeof parsed.error === "string") error = parsed.error;
        if (typeof parsed.detail === "string") detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(res.status, error, detail);
    }
    return text;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    return JSON.parse(await this.request(method, path, body)) as T;
  }

  way(wayId: string): Promise<WayJson> {
    return this.json("GET", `/ways/${wayId}`);
  }

  trend(wayId: string): Promise<TrendJson> {
    return this.json("GET", `/ways/${wayId}/trend`);
  }

  indicators(sessionId: string): Promise<IndicatorsJson> {
    return this.json("GET", `/sessions/${sessionId}/indicators`);
  }

  async feedPage(sessionId: string, fromSeq = 0): Promise<FeedEnvelope[]> {
    const text = await this.request("GET", `/sessions/${sessionId}/feed?from_seq=${fromSeq}`);
    return parseNdjson(text);
  }

  applyEdits(routeId: string, edits: EditBody[]): Promise<RouteJson> {
    return this.json("POST", `/routes/${routeId}/edits`, { edits });
  }

  openNegotiation(routeId: string, negId?: string): Promise<NegotiationViewJson> {
    return this.json("POST", `/negotiations/${routeId}`, negId === undefined ? {} : { neg_id: negId });
  }

  stepNegotiation(
    routeId: string,
    action: NegotiationActionName,
    tsMs: number,
    detail?: string,
  ): Promise<NegotiationViewJson> {
    const body: Record<string, unknown> = { action, ts_ms: tsMs };
    if (detail !== undefined) body.detail = detail;
    return this.json("POST", `/negotiations/${routeId}/step`, body);
  }

  finalizeNegotiation(routeId: string): Promise<RouteJson> {
    return this.json("POST", `/negotiations/${routeId}/finalize`);
  }

  /** Log trainer help given over the audio link or in person. */
  assist(sessionId: string, source: string, note = "", tsMs?: number): Promise<{ events: TrainingEvent[] }> {
    const body: Record<string, unknown> = { source, note };
    if (tsMs !== undefined) body.ts_ms = tsMs;
    return this.json("POST", `/sessions/${sessionId}/assist`, body);
  }
}
