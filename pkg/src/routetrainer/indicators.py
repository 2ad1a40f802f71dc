"""Training indicators computed from immutable session records.

Everything here is derived from the event log alone; there is no hidden
coupling to live engine state, so any record (including a synthetic one) can
be scored. Ratios with an empty denominator come back as None and are
flagged, never silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import engine as ev
from .config import PolicyThresholds
from .engine import SessionRecord, Supervision, SUPERVISION_LADDER
from .errors import InputError, IntegrityError
from .model import SUPPORT_LADDER, SupportMode


@dataclass(frozen=True)
class Counters:
    decision_points: int  # landmark geofence entries visible in the log
    correct: int  # of those, passed without mistake, wrong answer, or assist
    assists: int  # trainer assists + augmentation views + fallback instructions
    off_track: int  # episodes begun
    self_recoveries: int  # episodes the walker closed alone
    reports: int  # user-filed unexpected reports
    poi_entries: int  # all alerted POI entries, any kind
    route_km: float

    def to_dict(self) -> dict:
        return {
            "decision_points": self.decision_points,
            "correct": self.correct,
            "assists": self.assists,
            "off_track": self.off_track,
            "self_recoveries": self.self_recoveries,
            "reports": self.reports,
            "poi_entries": self.poi_entries,
            "route_km": self.route_km,
        }


@dataclass(frozen=True)
class IndicatorSet:
    session_id: str
    autonomy: float
    accuracy: float | None
    error_rate_per_km: float
    recovery: float | None
    confidence: int | None
    counters: Counters
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "autonomy": self.autonomy,
            "accuracy": self.accuracy,
            "error_rate_per_km": self.error_rate_per_km,
            "recovery": self.recovery,
            "confidence": self.confidence,
            "counters": self.counters.to_dict(),
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SubpathIndicators:
    start_m: float
    end_m: float
    mode: SupportMode
    counters: Counters
    accuracy: float | None
    recovery: float | None

    def to_dict(self) -> dict:
        return {
            "start_m": self.start_m,
            "end_m": self.end_m,
            "mode": self.mode.value,
            "counters": self.counters.to_dict(),
            "accuracy": self.accuracy,
            "recovery": self.recovery,
        }


def _landmark_window(record: SessionRecord, poi_id: str) -> tuple[float, float]:
    for lm in record.landmarks:
        if lm.poi_id == poi_id:
            return (lm.along_m - lm.radius_m, lm.along_m + record.mistake_window_m)
    # a landmark the engine alerted on is always in the snapshot; synthetic
    # logs may omit it, in which case the window collapses to nothing
    return (float("inf"), float("-inf"))


@dataclass(frozen=True)
class _Scan:
    """Pass over the event log shared by session and sub-path scoring."""

    landmark_entries: tuple[tuple[str, float], ...]  # (poi_id, along_m)
    poi_entries: tuple[float, ...]  # along_m of every alert
    mistakes: frozenset[str]  # poi ids with an attributed episode
    wrong_quiz: frozenset[str]  # poi ids answered wrong or closed unanswered
    assists: tuple[float, ...]  # along_m of each AssistLogged
    ar_views: tuple[float, ...]
    fallbacks: tuple[float, ...]  # along_m of fallback instructions
    episodes: tuple[tuple[float, str], ...]  # (begin along_m, resolution)
    reports: tuple[float, ...]
    flags: tuple[str, ...]


def _scan(record: SessionRecord) -> _Scan:
    landmark_entries: list[tuple[str, float]] = []
    poi_entries: list[float] = []
    mistakes: set[str] = set()
    wrong_quiz: set[str] = set()
    assists: list[float] = []
    ar_views: list[float] = []
    fallbacks: list[float] = []
    episodes: list[tuple[float, str]] = []
    reports: list[float] = []
    flags: list[str] = []

    open_along: float | None = None
    ended_off_track = False

    for event in record.events:
        p = event.payload
        if event.type == ev.VICINITY_ALERT:
            poi_entries.append(p["along_m"])
            if p.get("kind") == "landmark":
                landmark_entries.append((p["poi_id"], p["along_m"]))
        elif event.type == ev.OFF_TRACK_BEGIN:
            if open_along is not None:
                raise IntegrityError("episode began while another was open")
            open_along = p["start_along_m"]
            if p.get("attributed_poi"):
                mistakes.add(p["attributed_poi"])
        elif event.type == ev.OFF_TRACK_END:
            if open_along is None:
                raise IntegrityError("episode ended without a beginning")
            episodes.append((open_along, p["resolution"]))
            open_along = None
        elif event.type == ev.QUIZ_ANSWER:
            if not p["correct"]:
                wrong_quiz.add(p["poi_id"])
        elif event.type == ev.ASSIST_LOGGED:
            assists.append(p["along_m"])
        elif event.type == ev.AR_ACTIVATED:
            ar_views.append(p["along_m"])
        elif event.type == ev.INSTRUCTION:
            if p.get("fallback"):
                fallbacks.append(p["along_m"])
        elif event.type == ev.UNEXPECTED_REPORT:
            reports.append(p["along_m"])
        elif event.type == ev.SESSION_END:
            ended_off_track = bool(p.get("ended_off_track"))

    if open_along is not None:
        if not ended_off_track:
            raise IntegrityError("unpaired off-track episode in a closed session")
        episodes.append((open_along, "unresolved"))
        flags.append("ended-off-track")

    return _Scan(
        landmark_entries=tuple(landmark_entries),
        poi_entries=tuple(poi_entries),
        mistakes=frozenset(mistakes),
        wrong_quiz=frozenset(wrong_quiz),
        assists=tuple(assists),
        ar_views=tuple(ar_views),
        fallbacks=tuple(fallbacks),
        episodes=tuple(episodes),
        reports=tuple(reports),
        flags=tuple(flags),
    )


def _is_correct(record: SessionRecord, scan: _Scan, poi_id: str) -> bool:
    if poi_id in scan.mistakes or poi_id in scan.wrong_quiz:
        return False
    lo, hi = _landmark_window(record, poi_id)
    return not any(lo <= a <= hi for a in scan.assists)


def _counters(record: SessionRecord, scan: _Scan, route_km: float) -> Counters:
    correct = sum(1 for poi_id, _ in scan.landmark_entries if _is_correct(record, scan, poi_id))
    return Counters(
        decision_points=len(scan.landmark_entries),
        correct=correct,
        assists=len(scan.assists) + len(scan.ar_views) + len(scan.fallbacks),
        off_track=len(scan.episodes),
        self_recoveries=sum(1 for _, res in scan.episodes if res == "self"),
        reports=len(scan.reports),
        poi_entries=len(scan.poi_entries),
        route_km=route_km,
    )


def _ratios(c: Counters) -> tuple[float, float | None, float, float | None]:
    autonomy = 1.0 - min(1.0, c.assists / max(1, c.poi_entries))
    accuracy = None if c.decision_points == 0 else c.correct / c.decision_points
    error_rate = (c.decision_points - c.correct + c.off_track + c.reports) / c.route_km
    recovery = None if c.off_track == 0 else c.self_recoveries / c.off_track
    return autonomy, accuracy, error_rate, recovery


def compute_indicators(record: SessionRecord) -> IndicatorSet:
    """Session-level indicator set.

    Raises:
        IntegrityError: malformed log (unpaired or nested episodes).
    """
    scan = _scan(record)
    counters = _counters(record, scan, record.route_length_m / 1000.0)
    autonomy, accuracy, error_rate, recovery = _ratios(counters)
    flags = list(scan.flags)
    if accuracy is None:
        flags.append("accuracy-undefined")
    if recovery is None:
        flags.append("recovery-undefined")
    return IndicatorSet(
        session_id=record.session_id,
        autonomy=autonomy,
        accuracy=accuracy,
        error_rate_per_km=error_rate,
        recovery=recovery,
        confidence=record.self_report,
        counters=counters,
        flags=tuple(flags),
    )


def _subpath_index(record: SessionRecord, along_m: float) -> int:
    spans = sorted(range(len(record.subpaths)), key=lambda i: record.subpaths[i].start_m)
    clamped = min(max(along_m, 0.0), record.route_length_m)
    for i in spans:
        sp = record.subpaths[i]
        if sp.start_m <= clamped < sp.end_m:
            return i
    return spans[-1]


def subpath_breakdown(record: SessionRecord) -> list[SubpathIndicators]:
    """Per-sub-path counters; each counted event lands in exactly one
    sub-path, so per-column sums equal the session counters."""
    scan = _scan(record)
    n = len(record.subpaths)
    if n == 0:
        return []
    landmark_by = [[] for _ in range(n)]
    buckets = {
        "entries": [0] * n,
        "assists": [0] * n,
        "ar": [0] * n,
        "fallbacks": [0] * n,
        "reports": [0] * n,
        "episodes": [[] for _ in range(n)],
    }
    for poi_id, along in scan.landmark_entries:
        landmark_by[_subpath_index(record, along)].append(poi_id)
    for along in scan.poi_entries:
        buckets["entries"][_subpath_index(record, along)] += 1
    for along in scan.assists:
        buckets["assists"][_subpath_index(record, along)] += 1
    for along in scan.ar_views:
        buckets["ar"][_subpath_index(record, along)] += 1
    for along in scan.fallbacks:
        buckets["fallbacks"][_subpath_index(record, along)] += 1
    for along in scan.reports:
        buckets["reports"][_subpath_index(record, along)] += 1
    for begin_along, res in scan.episodes:
        buckets["episodes"][_subpath_index(record, begin_along)].append(res)

    out: list[SubpathIndicators] = []
    for i, sp in enumerate(record.subpaths):
        correct = sum(1 for poi_id in landmark_by[i] if _is_correct(record, scan, poi_id))
        c = Counters(
            decision_points=len(landmark_by[i]),
            correct=correct,
            assists=buckets["assists"][i] + buckets["ar"][i] + buckets["fallbacks"][i],
            off_track=len(buckets["episodes"][i]),
            self_recoveries=sum(1 for r in buckets["episodes"][i] if r == "self"),
            reports=buckets["reports"][i],
            poi_entries=buckets["entries"][i],
            route_km=(sp.end_m - sp.start_m) / 1000.0,
        )
        accuracy = None if c.decision_points == 0 else c.correct / c.decision_points
        recovery = None if c.off_track == 0 else c.self_recoveries / c.off_track
        out.append(
            SubpathIndicators(
                start_m=sp.start_m,
                end_m=sp.end_m,
                mode=sp.mode,
                counters=c,
                accuracy=accuracy,
                recovery=recovery,
            )
        )
    return out


def indicator_report(record: SessionRecord) -> dict:
    """The wire-format report for one session."""
    session = compute_indicators(record)
    return {
        "session_id": record.session_id,
        "autonomy": session.autonomy,
        "accuracy": session.accuracy,
        "error_rate_per_km": session.error_rate_per_km,
        "recovery": session.recovery,
        "confidence": session.confidence,
        "counters": session.counters.to_dict(),
        "subpaths": [s.to_dict() for s in subpath_breakdown(record)],
    }


# ------------------------------------------------------------------ trends

@dataclass(frozen=True)
class TrendPoint:
    session_id: str
    ended_ts: int
    route_version: int
    indicators: IndicatorSet
    subpaths: tuple[SubpathIndicators, ...]


@dataclass(frozen=True)
class AdaptationSuggestion:
    """Advisory only; a human decides whether to apply it."""

    kind: str  # "support_mode" | "supervision"
    subpath: tuple[float, float] | None
    current: str
    suggested: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subpath": list(self.subpath) if self.subpath else None,
            "current": self.current,
            "suggested": self.suggested,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class TrendReport:
    way_id: str
    series: tuple[TrendPoint, ...]
    deltas: tuple[dict, ...]
    suggestions: tuple[AdaptationSuggestion, ...]

    def to_dict(self) -> dict:
        return {
            "way_id": self.way_id,
            "series": [
                {
                    "session_id": p.session_id,
                    "ended_ts": p.ended_ts,
                    "route_version": p.route_version,
                    **p.indicators.to_dict(),
                    "subpaths": [s.to_dict() for s in p.subpaths],
                }
                for p in self.series
            ],
            "deltas": list(self.deltas),
            "suggestions": [s.to_dict() for s in self.suggestions],
        }


def _delta(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return b - a


def learning_trend(
    records: Sequence[SessionRecord],
    thresholds: PolicyThresholds | None = None,
) -> TrendReport:
    """Indicator series over the sessions of one way, oldest first.

    Sessions may span different route versions; every point is annotated with
    the version it ran against, and deltas are still reported across version
    boundaries.

    Raises:
        InputError: empty input, or records from more than one way.
    """
    if not records:
        raise InputError("a trend needs at least one session")
    way_ids = {r.way_id for r in records}
    if len(way_ids) != 1:
        raise InputError(f"trend mixes ways: {sorted(way_ids)}")
    ordered = sorted(records, key=lambda r: (r.ended_ts, r.session_id))
    series = tuple(
        TrendPoint(
            session_id=r.session_id,
            ended_ts=r.ended_ts,
            route_version=r.route_version,
            indicators=compute_indicators(r),
            subpaths=tuple(subpath_breakdown(r)),
        )
        for r in ordered
    )
    deltas: list[dict] = []
    for a, b in zip(series, series[1:]):
        deltas.append(
            {
                "from": a.session_id,
                "to": b.session_id,
                "autonomy": _delta(a.indicators.autonomy, b.indicators.autonomy),
                "accuracy": _delta(a.indicators.accuracy, b.indicators.accuracy),
                "error_rate_per_km": _delta(
                    a.indicators.error_rate_per_km, b.indicators.error_rate_per_km
                ),
                "recovery": _delta(a.indicators.recovery, b.indicators.recovery),
            }
        )
    suggestions = recommend_adaptation(series, ordered, thresholds or PolicyThresholds())
    return TrendReport(
        way_id=next(iter(way_ids)),
        series=series,
        deltas=tuple(deltas),
        suggestions=tuple(suggestions),
    )


def _ladder_next(mode: SupportMode) -> SupportMode | None:
    i = SUPPORT_LADDER.index(mode)
    return SUPPORT_LADDER[i + 1] if i + 1 < len(SUPPORT_LADDER) else None


def _ladder_prev(mode: SupportMode) -> SupportMode | None:
    i = SUPPORT_LADDER.index(mode)
    return SUPPORT_LADDER[i - 1] if i > 0 else None


def recommend_adaptation(
    series: Sequence[TrendPoint],
    records: Sequence[SessionRecord],
    thresholds: PolicyThresholds,
) -> list[AdaptationSuggestion]:
    """Suggest (never apply) the next rung on the support ladders.

    Promotion of a sub-path needs the last k sessions on that exact sub-path
    to be clean; one bad session is enough to suggest stepping back. Easing
    supervision is only on the table once every sub-path runs at reward level
    or quieter, and it moves one rung at a time.
    """
    if not series:
        return []
    latest = series[-1]
    latest_record = records[-1]
    k = thresholds.clean_sessions
    out: list[AdaptationSuggestion] = []

    for sp in latest.subpaths:
        key = (sp.start_m, sp.end_m, sp.mode)
        history: list[SubpathIndicators] = []
        for point in reversed(series):
            if point.route_version != latest.route_version:
                break
            match = next(
                (
                    row
                    for row in point.subpaths
                    if (row.start_m, row.end_m, row.mode) == key
                ),
                None,
            )
            if match is None:
                break
            history.append(match)
            if len(history) == k:
                break

        if (
            len(history) == k
            and all(
                row.accuracy is not None
                and row.accuracy >= thresholds.promote_accuracy
                and row.counters.off_track == 0
                for row in history
            )
        ):
            nxt = _ladder_next(sp.mode)
            if nxt is not None:
                out.append(
                    AdaptationSuggestion(
                        kind="support_mode",
                        subpath=(sp.start_m, sp.end_m),
                        current=sp.mode.value,
                        suggested=nxt.value,
                        reason=f"accuracy >= {thresholds.promote_accuracy} with no "
                        f"off-track episodes for {k} consecutive sessions",
                    )
                )
        elif sp.accuracy is not None and sp.accuracy < thresholds.demote_accuracy:
            prev = _ladder_prev(sp.mode)
            if prev is not None:
                out.append(
                    AdaptationSuggestion(
                        kind="support_mode",
                        subpath=(sp.start_m, sp.end_m),
                        current=sp.mode.value,
                        suggested=prev.value,
                        reason=f"accuracy fell below {thresholds.demote_accuracy}",
                    )
                )

    # supervision moves only when the whole route is at reward level or
    # quieter, and the recent sessions were clean overall
    modes = {sp.mode for sp in latest.subpaths}
    if modes and modes <= {SupportMode.REWARD, SupportMode.MUTE}:
        recent = list(series[-k:])
        if len(recent) == k and all(
            p.indicators.accuracy is not None
            and p.indicators.accuracy >= thresholds.promote_accuracy
            and p.indicators.counters.off_track == 0
            for p in recent
        ):
            current = latest_record.config.supervision
            i = SUPERVISION_LADDER.index(current)
            if i + 1 < len(SUPERVISION_LADDER):
                out.append(
                    AdaptationSuggestion(
                        kind="supervision",
                        subpath=None,
                        current=current.value,
                        suggested=SUPERVISION_LADDER[i + 1].value,
                        reason="all sub-paths at reward level or quieter with "
                        f"{k} clean sessions",
                    )
                )
    return out
