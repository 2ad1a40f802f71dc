import type { FeedEnvelope } from "./api.js";

export type FeedStatus = "idle" | "live" | "stale" | "ended";

export type FetchFeedPage = (sessionId: string, fromSeq: number) => Promise<FeedEnvelope[]>;

/**
 * One subscription per monitored session. Pull-based so the host can drive it
 * from a timer, a stream reader, or a test.
 *
 * Sequence numbers are the contract: envelopes are delivered to the listener
 * exactly once and in order. After any failure the next poll re-requests from
 * the first sequence number we have not seen, so a reconnect replays whatever
 * was missed and nothing is invented on the client.
 */
export class FeedConnection {
  private nextSeq = 0;
  private _status: FeedStatus = "idle";

  constructor(
    private readonly fetchPage: FetchFeedPage,
    readonly sessionId: string,
    private readonly onEnvelope: (envelope: FeedEnvelope) => void,
  ) {}

  get status(): FeedStatus {
    return this._status;
  }

  /** Highest sequence number delivered so far, -1 before the first one. */
  get lastSeq(): number {
    return this.nextSeq - 1;
  }

  /** Fetch and deliver everything new. Returns the number delivered. */
  async poll(): Promise<number> {
    let page: FeedEnvelope[];
    try {
      page = await this.fetchPage(this.sessionId, this.nextSeq);
    } catch {
      if (this._status !== "ended") this._status = "stale";
      return 0;
    }
    let delivered = 0;
    for (const envelope of page) {
      if (envelope.seq < this.nextSeq) continue; // replay overlap, already seen
      if (envelope.seq > this.nextSeq) {
        // a hole means the transport dropped rows mid-page; do not skip
        // past it, re-request from nextSeq on the following poll
        this._status = "stale";
        return delivered;
      }
      this.onEnvelope(envelope);
      this.nextSeq += 1;
      delivered += 1;
      if (envelope.event.type === "SessionEnd") {
        this._status = "ended";
        return delivered;
      }
    }
    if (this._status !== "ended") this._status = "live";
    return delivered;
  }
}
