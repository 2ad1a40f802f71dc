import type { FeedEnvelope, LatLon, RouteJson, Snapshot, TrainingEvent } from "./api.js";
import type { FeedStatus } from "./feed.js";

export interface TickerRow {
  seq: number;
  ts_ms: number;
  type: string;
  label: string;
}

export interface AlertBanner {
  kind: "off-track" | "help";
  seq: number;
  ts_ms: number;
  message: string;
}

export interface PoiMarker {
  id: string;
  lat: number;
  lon: number;
  kind: string;
  radius_m: number;
}

export interface FeedBadge {
  status: FeedStatus;
  lastSeq: number;
}

export interface MonitorView {
  sessionId: string;
  /** Latest snapshot seen on the feed; null until one arrives. */
  walker: Snapshot | null;
  routeLine: LatLon[];
  poiMarkers: PoiMarker[];
  ticker: TickerRow[];
  banners: AlertBanner[];
  feed: FeedBadge;
  sessionEnded: boolean;
}

function num(payload: Record<string, unknown>, key: string): number {
  const v = payload[key];
  return typeof v === "number" ? v : NaN;
}

function str(payload: Record<string, unknown>, key: string): string {
  const v = payload[key];
  return typeof v === "string" ? v : "";
}

export function eventLabel(event: TrainingEvent): string {
  const p = event.payload;
  switch (event.type) {
    case "SessionStart":
      return `session started (${str(p, "supervision")})`;
    case "VicinityAlert":
      return `approaching ${str(p, "poi_id")}`;
    case "Instruction":
      return p.fallback ? `instruction (fallback): ${str(p, "text")}` : `instruction: ${str(p, "text")}`;
    case "Reassurance":
      return str(p, "text") ? `reassurance: ${str(p, "text")}` : `on track near ${str(p, "poi_id")}`;
    case "QuizPrompt": {
      const n = Array.isArray(p.choices) ? p.choices.length : 0;
      return `quiz at ${str(p, "poi_id")} (${n} choices)`;
    }
    case "QuizAnswer":
      return p.correct ? "quiz answered correctly" : "quiz answered wrong";
    case "Reward":
      return `reward earned at ${str(p, "poi_id")}`;
    case "MistakeAlert":
      return `mistake attributed to ${str(p, "poi_id")}`;
    case "OffTrackBegin":
      return `off track, ${Math.round(num(p, "cross_track_m"))} m out`;
    case "RecoveryPrompt":
      return "recovery guidance shown";
    case "OffTrackEnd":
      return `back on track (${str(p, "resolution")})`;
    case "SignalLost":
      return `signal lost for ${num(p, "gap_s")} s`;
    case "SignalRestored":
      return "signal restored";
    case "HelpRequest":
      return str(p, "reason") ? `help requested: ${str(p, "reason")}` : "help requested";
    case "UnexpectedReport":
      return `reported ${str(p, "kind")}`;
    case "AssistLogged":
      return `assist by ${str(p, "source")}`;
    case "ARActivated":
      return "camera view opened";
    case "SessionEnd":
      return "session ended";
    default:
      return event.type;
  }
}

/**
 * Live monitor for one session. Positions come exclusively from feed
 * envelopes; the monitor never extrapolates or invents them. Route geometry
 * and POI markers come from a route the trainer already holds.
 */
export class MonitorState {
  private ticker: TickerRow[] = [];
  private walker: Snapshot | null = null;
  private lastSeq = -1;
  private ended = false;
  private offTrack: AlertBanner | null = null;
  private helpBanners: AlertBanner[] = [];

  constructor(
    readonly sessionId: string,
    private route: RouteJson | null = null,
  ) {}

  setRoute(route: RouteJson): void {
    this.route = route;
  }

  push(envelope: FeedEnvelope): void {
    if (envelope.session_id !== this.sessionId || envelope.seq <= this.lastSeq) return;
    this.lastSeq = envelope.seq;
    const event = envelope.event;
    this.ticker.push({
      seq: envelope.seq,
      ts_ms: event.ts_ms,
      type: event.type,
      label: eventLabel(event),
    });
    if (envelope.position !== null) this.walker = envelope.position;

    switch (event.type) {
      case "OffTrackBegin":
        this.offTrack = {
          kind: "off-track",
          seq: envelope.seq,
          ts_ms: event.ts_ms,
          message: eventLabel(event),
        };
        break;
      case "OffTrackEnd":
        this.offTrack = null;
        break;
      case "HelpRequest":
        this.helpBanners.push({
          kind: "help",
          seq: envelope.seq,
          ts_ms: event.ts_ms,
          message: eventLabel(event),
        });
        break;
      case "SessionEnd":
        this.ended = true;
        break;
    }
  }

  /** The help-acknowledge control; clears that banner, nothing is posted. */
  acknowledgeHelp(seq: number): void {
    this.helpBanners = this.helpBanners.filter((b) => b.seq !== seq);
  }

  /** Body for the assist button; the host posts it via ApiClient.assist. */
  assistRequest(note = ""): { path: string; body: { source: string; note: string } } {
    return {
      path: `/sessions/${this.sessionId}/assist`,
      body: { source: "RemoteTrainer", note },
    };
  }

  render(feed?: FeedBadge): MonitorView {
    const banners: AlertBanner[] = [];
    if (this.offTrack) banners.push(this.offTrack);
    banners.push(...this.helpBanners);
    return {
      sessionId: this.sessionId,
      walker: this.walker,
      routeLine: this.route ? [...this.route.geometry] : [],
      poiMarkers: this.route
        ? this.route.pois.map((p) => ({
            id: p.id,
            lat: p.lat,
            lon: p.lon,
            kind: p.kind,
            radius_m: p.radius_m,
          }))
        : [],
      ticker: [...this.ticker],
      banners,
      feed: feed ?? { status: this.ended ? "ended" : "live", lastSeq: this.lastSeq },
      sessionEnded: this.ended,
    };
  }
}
