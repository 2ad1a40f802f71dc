import type { FeedStatus } from "./feed.js";

export type Screen = "monitor" | "negotiate" | "playback" | "trends";

/**
 * The one piece of app-level state. Everything on screen derives from this
 * plus the payloads the views are built from; there is no second loop.
 */
export interface ViewState {
  screen: Screen;
  wayId: string | null;
  routeId: string | null;
  sessionId: string | null;
  feed: { status: FeedStatus; lastSeq: number } | null;
}

export function initialViewState(): ViewState {
  return { screen: "monitor", wayId: null, routeId: null, sessionId: null, feed: null };
}

export function showScreen(state: ViewState, screen: Screen): ViewState {
  return { ...state, screen };
}

export function selectWay(state: ViewState, wayId: string, routeId: string | null): ViewState {
  return { ...state, wayId, routeId };
}

// switching sessions drops the old subscription state with it
export function selectSession(state: ViewState, sessionId: string | null): ViewState {
  return { ...state, sessionId, feed: null };
}

export function noteFeed(state: ViewState, status: FeedStatus, lastSeq: number): ViewState {
  return { ...state, feed: { status, lastSeq } };
}
