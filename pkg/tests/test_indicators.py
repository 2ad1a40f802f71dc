"""Indicator math, sub-path breakdowns, trends, and adaptation advice."""

from __future__ import annotations

import dataclasses

import pytest

from routetrainer.config import PolicyThresholds
from routetrainer.engine import (
    LandmarkRef,
    Modality,
    SessionRecord,
    Supervision,
    TrainingConfig,
    TrainingEvent,
)
from routetrainer.errors import InputError, IntegrityError
from routetrainer.indicators import (
    compute_indicators,
    indicator_report,
    learning_trend,
    subpath_breakdown,
)
from routetrainer.model import SubPath, SupportMode

from conftest import all_events, drive, make_session, on_track, working_route
from oracles import count_indicators_by_hand

T0 = 1_700_000_100_000


# ------------------------------------------------------- synthetic records

def _events(session_id: str, specs: list[tuple[str, dict]]) -> tuple[TrainingEvent, ...]:
    out = []
    for i, (type_, payload) in enumerate(specs):
        out.append(TrainingEvent(ts=T0 + i * 1_000, session_id=session_id,
                                 seq=i, type=type_, payload=payload))
    return tuple(out)


def synthetic_record(
    session_id: str,
    specs: list[tuple[str, dict]],
    *,
    ended_ts: int = T0 + 1_000_000,
    landmarks: tuple[tuple[str, float, float], ...] = (
        ("lm1", 200.0, 25.0), ("lm2", 600.0, 25.0),
        ("lm3", 1000.0, 25.0), ("lm4", 1400.0, 25.0),
    ),
    subpaths: tuple[SubPath, ...] = (SubPath(0.0, 2000.0, SupportMode.ACTIONABLE),),
    route_length_m: float = 2000.0,
    route_version: int = 3,
    supervision: Supervision = Supervision.IN_PERSON,
    way_id: str = "way-1",
    self_report: int | None = None,
) -> SessionRecord:
    specs = [("SessionStart", {})] + specs + [
        ("SessionEnd", {"confidence": self_report, "ended_off_track": False})
    ]
    return SessionRecord(
        session_id=session_id,
        way_id=way_id,
        route_id="route-1",
        route_version=route_version,
        started_ts=T0,
        ended_ts=ended_ts,
        config=TrainingConfig(supervision, frozenset({Modality.TEXT})),
        consent_id=f"c-{session_id}",
        self_report=self_report,
        events=_events(session_id, specs),
        fixes=(),
        route_length_m=route_length_m,
        subpaths=subpaths,
        landmarks=tuple(LandmarkRef(*l) for l in landmarks),
        mistake_window_m=50.0,
    )


def lm_entry(poi_id: str, along: float) -> tuple[str, dict]:
    return ("VicinityAlert", {"poi_id": poi_id, "kind": "landmark",
                              "mode": "actionable", "along_m": along})


def re_entry(poi_id: str, along: float) -> tuple[str, dict]:
    return ("VicinityAlert", {"poi_id": poi_id, "kind": "reassurance",
                              "mode": "actionable", "along_m": along})


def episode(start_along: float, resolution: str = "self",
            attributed: str | None = None) -> list[tuple[str, dict]]:
    return [
        ("OffTrackBegin", {"cross_track_m": 40.0, "start_along_m": start_along,
                           "attributed_poi": attributed}),
        ("OffTrackEnd", {"resolution": resolution, "along_m": start_along}),
    ]


# ------------------------------------------------------------- session math

def test_hand_worked_example():
    # four decision points, one wrong turn, one unrelated assist
    record = synthetic_record("s-ex", [
        lm_entry("lm1", 200.0),
        lm_entry("lm2", 600.0),
        *episode(620.0, "self", attributed="lm2"),
        re_entry("re9", 800.0),
        lm_entry("lm3", 1000.0),
        ("AssistLogged", {"source": "InPersonTrainer", "note": "", "along_m": 1200.0}),
        lm_entry("lm4", 1400.0),
    ], self_report=4)

    result = compute_indicators(record)
    c = result.counters
    assert (c.decision_points, c.correct, c.assists, c.off_track,
            c.self_recoveries, c.reports, c.poi_entries) == (4, 3, 1, 1, 1, 0, 5)
    assert result.accuracy == pytest.approx(0.75)
    assert result.autonomy == pytest.approx(1.0 - 1 / 5)
    assert result.error_rate_per_km == pytest.approx((4 - 3 + 1 + 0) / 2.0)
    assert result.recovery == pytest.approx(1.0)
    assert result.confidence == 4
    assert result.flags == ()


def test_assist_inside_a_landmark_window_spoils_it():
    record = synthetic_record("s-a", [
        lm_entry("lm3", 1000.0),
        ("AssistLogged", {"source": "InPersonTrainer", "note": "", "along_m": 1030.0}),
    ])
    result = compute_indicators(record)
    assert result.counters.correct == 0
    # window opens at the geofence edge before the landmark
    record2 = synthetic_record("s-b", [
        lm_entry("lm3", 1000.0),
        ("AssistLogged", {"source": "InPersonTrainer", "note": "", "along_m": 980.0}),
    ])
    assert compute_indicators(record2).counters.correct == 0
    # just past the window is fine
    record3 = synthetic_record("s-c", [
        lm_entry("lm3", 1000.0),
        ("AssistLogged", {"source": "InPersonTrainer", "note": "", "along_m": 1051.0}),
    ])
    assert compute_indicators(record3).counters.correct == 1


def test_wrong_or_unanswered_quiz_spoils_the_landmark():
    record = synthetic_record("s-q", [
        lm_entry("lm1", 200.0),
        ("QuizAnswer", {"quiz_id": "q1", "poi_id": "lm1", "correct": False, "choice": "b"}),
        ("Instruction", {"poi_id": "lm1", "fallback": True, "quiz_id": "q1",
                         "along_m": 205.0}),
        lm_entry("lm2", 600.0),
        ("QuizAnswer", {"quiz_id": "q2", "poi_id": "lm2", "correct": True, "choice": "a"}),
    ])
    result = compute_indicators(record)
    assert result.counters.decision_points == 2
    assert result.counters.correct == 1
    assert result.counters.assists == 1  # the fallback instruction
    assert result.accuracy == pytest.approx(0.5)


def test_undefined_ratios_are_flagged_not_zeroed():
    record = synthetic_record("s-empty", [re_entry("re1", 100.0)])
    result = compute_indicators(record)
    assert result.accuracy is None
    assert result.recovery is None
    assert set(result.flags) == {"accuracy-undefined", "recovery-undefined"}
    assert result.error_rate_per_km == 0.0
    assert result.autonomy == 1.0


def test_assisted_recovery_counts_episode_but_not_self():
    record = synthetic_record("s-ar", [
        lm_entry("lm1", 200.0),
        *episode(220.0, "assisted", attributed="lm1"),
    ])
    result = compute_indicators(record)
    assert result.counters.off_track == 1
    assert result.counters.self_recoveries == 0
    assert result.recovery == 0.0


def test_malformed_episode_logs_are_rejected():
    nested = synthetic_record("s-n", [
        ("OffTrackBegin", {"cross_track_m": 40.0, "start_along_m": 100.0,
                           "attributed_poi": None}),
        ("OffTrackBegin", {"cross_track_m": 45.0, "start_along_m": 110.0,
                           "attributed_poi": None}),
    ])
    with pytest.raises(IntegrityError):
        compute_indicators(nested)
    headless = synthetic_record("s-h", [
        ("OffTrackEnd", {"resolution": "self", "along_m": 100.0}),
    ])
    with pytest.raises(IntegrityError):
        compute_indicators(headless)
    dangling = synthetic_record("s-d", [
        ("OffTrackBegin", {"cross_track_m": 40.0, "start_along_m": 100.0,
                           "attributed_poi": None}),
    ])
    with pytest.raises(IntegrityError):
        compute_indicators(dangling)


def test_session_may_end_off_track():
    record = synthetic_record("s-e", [
        ("OffTrackBegin", {"cross_track_m": 40.0, "start_along_m": 100.0,
                           "attributed_poi": None}),
    ])
    fixed_end = list(record.events[:-1]) + [
        TrainingEvent(ts=record.events[-1].ts, session_id="s-e",
                      seq=record.events[-1].seq, type="SessionEnd",
                      payload={"confidence": None, "ended_off_track": True})
    ]
    record = dataclasses.replace(record, events=tuple(fixed_end))
    result = compute_indicators(record)
    assert result.counters.off_track == 1
    assert result.counters.self_recoveries == 0
    assert "ended-off-track" in result.flags


def test_oracle_agreement_on_synthetic_records():
    records = [
        synthetic_record("s-ex", [
            lm_entry("lm1", 200.0),
            lm_entry("lm2", 600.0),
            *episode(620.0, "self", attributed="lm2"),
            re_entry("re9", 800.0),
            lm_entry("lm3", 1000.0),
            ("AssistLogged", {"source": "InPersonTrainer", "note": "", "along_m": 1200.0}),
            ("ARActivated", {"along_m": 1250.0}),
            ("UnexpectedReport", {"kind": "RoadBlocked", "along_m": 1300.0}),
            lm_entry("lm4", 1400.0),
        ]),
        synthetic_record("s-q", [
            lm_entry("lm1", 200.0),
            ("QuizAnswer", {"quiz_id": "q1", "poi_id": "lm1", "correct": False,
                            "choice": None, "auto_closed": True}),
        ]),
    ]
    for record in records:
        expected = count_indicators_by_hand(record.to_dict())
        result = compute_indicators(record)
        c = result.counters
        assert (c.decision_points, c.correct, c.assists, c.off_track,
                c.self_recoveries, c.reports, c.poi_entries) == (
            expected["D"], expected["C"], expected["A"], expected["O"],
            expected["Rs"], expected["U"], expected["entries"])
        assert result.autonomy == pytest.approx(expected["autonomy"], abs=1e-12)
        assert result.error_rate_per_km == pytest.approx(
            expected["error_rate_per_km"], abs=1e-12)
        if expected["accuracy"] is None:
            assert result.accuracy is None
        else:
            assert result.accuracy == pytest.approx(expected["accuracy"], abs=1e-12)
        if expected["recovery"] is None:
            assert result.recovery is None
        else:
            assert result.recovery == pytest.approx(expected["recovery"], abs=1e-12)


# ------------------------------------------------------- engine integration

def _three_mode_route():
    # lm0 actionable, re0 + lm1 quiz, lm2 sits in the muted tail
    line_end = working_route().length_m
    return working_route(
        landmark_at=(250.0, 600.0, 800.0),
        subpaths=(
            SubPath(0.0, 333.0, SupportMode.ACTIONABLE),
            SubPath(333.0, 666.0, SupportMode.QUIZ),
            SubPath(666.0, line_end, SupportMode.MUTE),
        ),
    )


def _answer_open_quiz(session, driven):
    prompt = [e for e in all_events(driven) if e.type == "QuizPrompt"][-1]
    correct = next(c["id"] for c in prompt.payload["choices"]
                   if c["poi_id"] == prompt.payload["poi_id"])
    session.answer_quiz(prompt.payload["quiz_id"], correct)


def test_breakdown_buckets_and_conserves_counts():
    session, route, _, _ = make_session(route=_three_mode_route())
    driven = drive(session, route, on_track(0.0, 590.0))
    _answer_open_quiz(session, driven)
    drive(session, route, on_track(600.0, 690.0), start_ts=T0 + 301_000)
    # a deviation inside the mute zone, recovered alone
    drive(session, route, [(700.0, 35.0), (700.0, 40.0), (700.0, 45.0), (710.0, 5.0)],
          start_ts=T0 + 351_000)
    # straight through the muted landmark to the end
    drive(session, route, on_track(720.0, 850.0), start_ts=T0 + 371_000)
    record = session.end(self_report=3)

    rows = subpath_breakdown(record)
    assert [r.mode for r in rows] == [SupportMode.ACTIONABLE, SupportMode.QUIZ,
                                      SupportMode.MUTE]
    total = compute_indicators(record).counters
    for name in ("decision_points", "correct", "assists", "off_track",
                 "self_recoveries", "reports", "poi_entries"):
        assert sum(getattr(r.counters, name) for r in rows) == getattr(total, name), name
    assert sum(r.counters.route_km for r in rows) == pytest.approx(total.route_km)
    # lm0 in span 1, re0+lm1 in span 2, the episode in span 3
    assert rows[0].counters.decision_points == 1
    assert rows[1].counters.decision_points == 1
    assert rows[1].counters.poi_entries == 2
    assert rows[2].counters.off_track == 1
    assert rows[2].counters.self_recoveries == 1
    # lm2 was crossed but muted: no alert, so no visible decision point
    assert rows[2].counters.poi_entries == 0
    assert rows[2].counters.decision_points == 0


def test_mistakes_localize_to_their_subpath():
    session, route, _, _ = make_session(route=_three_mode_route())
    driven = drive(session, route, on_track(0.0, 600.0))
    _answer_open_quiz(session, driven)
    # wrong turn right after the second landmark
    drive(session, route, [(610.0, 35.0), (610.0, 40.0), (610.0, 45.0), (615.0, 5.0)],
          start_ts=T0 + 306_000)
    record = session.end()

    rows = subpath_breakdown(record)
    assert rows[0].accuracy == pytest.approx(1.0)
    assert rows[1].accuracy == pytest.approx(0.0)
    assert rows[1].counters.off_track == 1
    session_level = compute_indicators(record)
    assert session_level.accuracy == pytest.approx(0.5)


def test_report_wire_shape():
    record = synthetic_record("s-w", [lm_entry("lm1", 200.0)])
    report = indicator_report(record)
    assert set(report) == {"session_id", "autonomy", "accuracy", "error_rate_per_km",
                           "recovery", "confidence", "counters", "subpaths"}
    assert set(report["counters"]) == {
        "decision_points", "correct", "assists", "off_track", "self_recoveries",
        "reports", "poi_entries", "route_km"}
    assert len(report["subpaths"]) == 1
    assert set(report["subpaths"][0]) == {"start_m", "end_m", "mode", "counters",
                                          "accuracy", "recovery"}


# ------------------------------------------------------------------- trends

def _clean(session_id, ended_ts, **kw):
    return synthetic_record(session_id, [
        lm_entry("lm1", 200.0),
        lm_entry("lm2", 600.0),
    ], ended_ts=ended_ts, **kw)


def _sloppy(session_id, ended_ts, **kw):
    return synthetic_record(session_id, [
        lm_entry("lm1", 200.0),
        *episode(210.0, "self", attributed="lm1"),
        lm_entry("lm2", 600.0),
        *episode(620.0, "self", attributed="lm2"),
    ], ended_ts=ended_ts, **kw)


def test_trend_orders_and_diffs():
    records = [
        _sloppy("s1", T0 + 1_000_000),
        _clean("s3", T0 + 3_000_000),
        _clean("s2", T0 + 2_000_000),
    ]
    trend = learning_trend(records)
    assert [p.session_id for p in trend.series] == ["s1", "s2", "s3"]
    assert trend.way_id == "way-1"
    first_delta = trend.deltas[0]
    assert first_delta["from"] == "s1" and first_delta["to"] == "s2"
    assert first_delta["accuracy"] == pytest.approx(1.0)  # 0.0 -> 1.0
    assert first_delta["error_rate_per_km"] == pytest.approx(-2.0)  # 4/2km -> 0
    assert first_delta["recovery"] is None  # s2 has no episodes
    d = trend.to_dict()
    assert set(d) == {"way_id", "series", "deltas", "suggestions"}
    assert d["series"][0]["route_version"] == 3


def test_trend_input_guards():
    with pytest.raises(InputError):
        learning_trend([])
    with pytest.raises(InputError):
        learning_trend([_clean("a", T0), _clean("b", T0 + 1, way_id="way-2")])


# -------------------------------------------------------------- adaptation

_SPLIT = (SubPath(0.0, 1000.0, SupportMode.ACTIONABLE),
          SubPath(1000.0, 2000.0, SupportMode.QUIZ))


def _split_session(session_id, ended_ts, *, mistake=False, version=3):
    specs = [lm_entry("lm1", 200.0)]
    specs.append(lm_entry("lm3", 1000.0))
    if mistake:
        specs.extend(episode(1020.0, "self", attributed="lm3"))
    return synthetic_record(session_id, specs, ended_ts=ended_ts,
                            subpaths=_SPLIT, route_version=version)


def test_promotion_needs_a_clean_streak():
    one = [_split_session("s1", T0 + 1_000_000)]
    assert learning_trend(one).suggestions == ()

    two = one + [_split_session("s2", T0 + 2_000_000)]
    suggestions = learning_trend(two).suggestions
    by_span = {s.subpath: s for s in suggestions}
    assert by_span[(0.0, 1000.0)].current == "actionable"
    assert by_span[(0.0, 1000.0)].suggested == "quiz"
    assert by_span[(1000.0, 2000.0)].current == "quiz"
    assert by_span[(1000.0, 2000.0)].suggested == "reward"
    assert all(s.kind == "support_mode" for s in suggestions)


def test_one_bad_session_suggests_stepping_back():
    records = [
        _split_session("s1", T0 + 1_000_000),
        _split_session("s2", T0 + 2_000_000, mistake=True),
    ]
    by_span = {s.subpath: s for s in learning_trend(records).suggestions}
    # the sub-paths are advised independently: the clean one still advances
    assert by_span[(0.0, 1000.0)].suggested == "quiz"
    back = by_span[(1000.0, 2000.0)]
    assert (back.current, back.suggested) == ("quiz", "actionable")


def test_streak_does_not_cross_route_versions():
    records = [
        _split_session("s1", T0 + 1_000_000, version=2),
        _split_session("s2", T0 + 2_000_000, version=3),
    ]
    assert learning_trend(records).suggestions == ()


def test_supervision_eases_only_when_everything_is_quiet():
    quiet = (SubPath(0.0, 2000.0, SupportMode.REWARD),)

    def quiet_session(session_id, ended_ts):
        return synthetic_record(session_id, [
            lm_entry("lm1", 200.0),
            ("Reward", {"poi_id": "lm1", "along_m": 200.0}),
        ], ended_ts=ended_ts, subpaths=quiet)

    records = [quiet_session("s1", T0 + 1_000_000), quiet_session("s2", T0 + 2_000_000)]
    suggestions = learning_trend(records).suggestions
    sup = [s for s in suggestions if s.kind == "supervision"]
    assert len(sup) == 1
    assert (sup[0].current, sup[0].suggested) == ("in_person", "remote")

    # noisy sub-paths keep supervision where it is
    loud = [_split_session("s1", T0 + 1_000_000), _split_session("s2", T0 + 2_000_000)]
    assert all(s.kind != "supervision" for s in learning_trend(loud).suggestions)


def test_thresholds_are_tunable():
    records = [_split_session(f"s{i}", T0 + i * 1_000_000) for i in range(1, 4)]
    strict = PolicyThresholds(promote_accuracy=0.9, demote_accuracy=0.5, clean_sessions=3)
    assert learning_trend(records, strict).suggestions != ()
    stricter = PolicyThresholds(promote_accuracy=0.9, demote_accuracy=0.5, clean_sessions=4)
    assert learning_trend(records, stricter).suggestions == ()
