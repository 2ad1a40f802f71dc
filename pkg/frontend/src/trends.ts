import type { EditBody, SuggestionJson, TrendJson } from "./api.js";

export interface SeriesPoint {
  sessionId: string;
  endedTs: number;
  /** null is rendered as a gap in the line, never as zero. */
  value: number | null;
}

export interface TrendSeries {
  autonomy: SeriesPoint[];
  accuracy: SeriesPoint[];
  errorRatePerKm: SeriesPoint[];
  recovery: SeriesPoint[];
}

export interface HeatCell {
  sessionId: string;
  accuracy: number | null;
  offTrack: number;
}

export interface HeatStripRow {
  startM: number;
  endM: number;
  mode: string;
  cells: HeatCell[]; // one per session, oldest first
}

export interface SuggestionControl {
  suggestion: SuggestionJson;
  /** The exact edit the apply button posts; null when nothing is postable. */
  edit: EditBody | null;
  path: string | null;
}

export interface TrendsView {
  wayId: string | null;
  empty: boolean;
  emptyMessage: string | null;
  series: TrendSeries;
  heatStrip: HeatStripRow[];
  suggestions: SuggestionControl[];
}

/**
 * Supervision suggestions are advice for the next session setup and have no
 * route edit; support mode suggestions map onto one partition retune.
 */
export function suggestionEdit(s: SuggestionJson): EditBody | null {
  if (s.kind !== "support_mode" || s.subpath === null) return null;
  return {
    op: "set_subpath_mode",
    start_m: s.subpath[0],
    end_m: s.subpath[1],
    mode: s.suggested,
  };
}

const EMPTY_MESSAGE = "no finished sessions for this way yet";

/**
 * Chart-ready projection of the trend payload. All numbers are the
 * service's; nothing is recomputed here.
 */
export function buildTrends(trend: TrendJson | null, routeId: string | null = null): TrendsView {
  if (trend === null || trend.series.length === 0) {
    return {
      wayId: trend?.way_id ?? null,
      empty: true,
      emptyMessage: EMPTY_MESSAGE,
      series: { autonomy: [], accuracy: [], errorRatePerKm: [], recovery: [] },
      heatStrip: [],
      suggestions: [],
    };
  }

  const point = (value: number | null, p: { session_id: string; ended_ts: number }): SeriesPoint => ({
    sessionId: p.session_id,
    endedTs: p.ended_ts,
    value,
  });

  const series: TrendSeries = {
    autonomy: trend.series.map((p) => point(p.autonomy, p)),
    accuracy: trend.series.map((p) => point(p.accuracy, p)),
    errorRatePerKm: trend.series.map((p) => point(p.error_rate_per_km, p)),
    recovery: trend.series.map((p) => point(p.recovery, p)),
  };

  // strip rows follow the latest session's partition; older sessions that ran
  // a different partition simply have no cell for that span
  const latest = trend.series[trend.series.length - 1]!;
  const heatStrip: HeatStripRow[] = latest.subpaths.map((sp) => ({
    startM: sp.start_m,
    endM: sp.end_m,
    mode: sp.mode,
    cells: trend.series.map((p) => {
      const row = p.subpaths.find(
        (r) => r.start_m === sp.start_m && r.end_m === sp.end_m && r.mode === sp.mode,
      );
      return {
        sessionId: p.session_id,
        accuracy: row ? row.accuracy : null,
        offTrack: row ? row.counters.off_track : 0,
      };
    }),
  }));

  const suggestions: SuggestionControl[] = trend.suggestions.map((s) => {
    const edit = suggestionEdit(s);
    return {
      suggestion: s,
      edit,
      path: edit !== null && routeId !== null ? `/routes/${routeId}/edits` : null,
    };
  });

  return {
    wayId: trend.way_id,
    empty: false,
    emptyMessage: null,
    series,
    heatStrip,
    suggestions,
  };
}
