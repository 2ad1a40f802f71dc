import type { ErwSessionJson, PoiJson } from "./api.js";

export interface ScrubPosition {
  tsMs: number;
  lat: number;
  lon: number;
  /** Index of the recorded fix at or before tsMs. */
  fixIndex: number;
}

export interface PlaybackMarker {
  poiId: string;
  tsMs: number;
  notes: string;
  photos: string[];
}

export interface VideoTrack {
  ref: string;
  /** Playback offset into the clip for a scrub timestamp. */
  offsetMsAt(tsMs: number): number;
}

/**
 * Time-indexed view over a finished recording walk. Scrubbing interpolates
 * linearly between the two fixes that bracket the timestamp; nothing outside
 * the recorded window is answerable.
 */
export class WalkPlayback {
  readonly sessionId: string;
  readonly startTs: number;
  readonly endTs: number;

  private readonly fixes: ErwSessionJson["fixes"];
  private readonly pois: PoiJson[];
  private readonly videoRef: string | null;

  private constructor(session: ErwSessionJson) {
    this.sessionId = session.id;
    this.fixes = session.fixes;
    this.pois = session.candidate_pois;
    this.videoRef = session.video_ref;
    this.startTs = session.fixes[0]!.ts_ms;
    this.endTs = session.fixes[session.fixes.length - 1]!.ts_ms;
  }

  static fromSession(session: ErwSessionJson): WalkPlayback {
    if (session.state !== "finished") {
      throw new Error(`walk ${session.id} is still ${session.state}`);
    }
    if (session.fixes.length < 2) {
      throw new Error(`walk ${session.id} has too few fixes to scrub`);
    }
    return new WalkPlayback(session);
  }

  positionAt(tsMs: number): ScrubPosition {
    if (tsMs < this.startTs || tsMs > this.endTs) {
      throw new RangeError(`ts ${tsMs} is outside the recording`);
    }
    let i = 0;
    while (i + 1 < this.fixes.length && this.fixes[i + 1]!.ts_ms <= tsMs) i++;
    const a = this.fixes[i]!;
    if (a.ts_ms === tsMs || i + 1 === this.fixes.length) {
      return { tsMs, lat: a.lat, lon: a.lon, fixIndex: i };
    }
    const b = this.fixes[i + 1]!;
    const f = (tsMs - a.ts_ms) / (b.ts_ms - a.ts_ms);
    return {
      tsMs,
      lat: a.lat + (b.lat - a.lat) * f,
      lon: a.lon + (b.lon - a.lon) * f,
      fixIndex: i,
    };
  }

  /** Capture markers on the scrub bar, in recording order. */
  markers(): PlaybackMarker[] {
    return this.pois
      .map((p) => ({ poiId: p.id, tsMs: p.ts_ms, notes: p.notes, photos: [...p.photos] }))
      .sort((a, b) => a.tsMs - b.tsMs);
  }

  jumpTo(poiId: string): ScrubPosition {
    const m = this.pois.find((p) => p.id === poiId);
    if (m === undefined) {
      throw new Error(`no capture ${poiId} in walk ${this.sessionId}`);
    }
    return this.positionAt(m.ts_ms);
  }

  /**
   * The synced clip, but only when the file is already on this machine.
   * isLocal gets the raw reference and answers; the dashboard never fetches
   * footage over the network.
   */
  video(isLocal: (ref: string) => boolean): VideoTrack | null {
    if (this.videoRef === null || !isLocal(this.videoRef)) return null;
    const start = this.startTs;
    return {
      ref: this.videoRef,
      offsetMsAt: (tsMs: number) => tsMs - start,
    };
  }
}
