"""The live training state machine.

A session consumes GPS fixes against a working route and emits a gapless,
deterministic event stream: vicinity alerts, instructions, quizzes, rewards,
mistake and off-track handling, signal-loss bookkeeping. No wall clock is
read anywhere; every timestamp comes from the inputs, so identical inputs
reproduce identical logs byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .canonical import canonical_dumps, sha256_hex
from .config import EngineSettings
from .errors import (
    ConsentError,
    ContractViolation,
    ModalityError,
    OrderingError,
    RoleError,
    StateError,
    ValidationFailed,
)
from .geo import GpsFix, haversine_distance, project_onto_polyline
from .model import (
    Poi,
    PoiKind,
    PoiStatus,
    RouteDefinition,
    RouteStatus,
    SubPath,
    SupportMode,
    instruction_payload,
    subpath_at,
    validate_route,
)
from .privacy import ConsentLedger, ConsentRecord, ConsentScope

CONSENT_MAX_AGE_MS = 24 * 3600 * 1000


class Supervision(str, Enum):
    IN_PERSON = "in_person"
    REMOTE = "remote"
    APP_ONLY = "app_only"


SUPERVISION_LADDER = (Supervision.IN_PERSON, Supervision.REMOTE, Supervision.APP_ONLY)


class Modality(str, Enum):
    TEXT = "text"
    SYMBOL = "symbol"
    AUDIO = "audio"
    TACTILE = "tactile"
    AR = "ar"


class AssistSource(str, Enum):
    IN_PERSON_TRAINER = "InPersonTrainer"
    REMOTE_TRAINER = "RemoteTrainer"


class UnexpectedKind(str, Enum):
    ROAD_BLOCKED = "RoadBlocked"
    PANIC = "Panic"
    LOST = "Lost"
    OTHER = "Other"


# event type names as they appear on the wire
SESSION_START = "SessionStart"
VICINITY_ALERT = "VicinityAlert"
INSTRUCTION = "Instruction"
REASSURANCE = "Reassurance"
QUIZ_PROMPT = "QuizPrompt"
QUIZ_ANSWER = "QuizAnswer"
REWARD = "Reward"
MISTAKE_ALERT = "MistakeAlert"
OFF_TRACK_BEGIN = "OffTrackBegin"
OFF_TRACK_END = "OffTrackEnd"
SIGNAL_LOST = "SignalLost"
SIGNAL_RESTORED = "SignalRestored"
RECOVERY_PROMPT = "RecoveryPrompt"
HELP_REQUEST = "HelpRequest"
UNEXPECTED_REPORT = "UnexpectedReport"
ASSIST_LOGGED = "AssistLogged"
AR_ACTIVATED = "ARActivated"
SESSION_END = "SessionEnd"


@dataclass(frozen=True)
class TrainingConfig:
    """Supervision level plus the delivery modalities for this session."""

    supervision: Supervision
    modalities: frozenset[Modality]

    def __post_init__(self):
        object.__setattr__(self, "modalities", frozenset(Modality(m) for m in self.modalities))
        object.__setattr__(self, "supervision", Supervision(self.supervision))
        if not self.modalities - {Modality.AR}:
            raise ModalityError(
                "augmentation cannot be the only channel; add a primary modality"
            )

    @property
    def feed_mandatory(self) -> bool:
        # a remote trainer is blind without the live feed
        return self.supervision is Supervision.REMOTE

    def to_dict(self) -> dict:
        return {
            "supervision": self.supervision.value,
            "modalities": sorted(m.value for m in self.modalities),
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingConfig":
        return TrainingConfig(
            supervision=Supervision(d["supervision"]),
            modalities=frozenset(Modality(m) for m in d["modalities"]),
        )


@dataclass(frozen=True)
class TrainingEvent:
    ts: int
    session_id: str
    seq: int
    type: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "ts_ms": self.ts,
            "session_id": self.session_id,
            "seq": self.seq,
            "type": self.type,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingEvent":
        return TrainingEvent(
            ts=d["ts_ms"],
            session_id=d["session_id"],
            seq=d["seq"],
            type=d["type"],
            payload=d["payload"],
        )


def events_to_ndjson(events: Sequence[TrainingEvent]) -> str:
    return "".join(canonical_dumps(e.to_dict()) + "\n" for e in events)


@dataclass(frozen=True)
class LandmarkRef:
    poi_id: str
    along_m: float
    radius_m: float


@dataclass(frozen=True)
class SessionRecord:
    """Everything needed to recompute indicators later, self-contained."""

    session_id: str
    way_id: str
    route_id: str
    route_version: int
    started_ts: int
    ended_ts: int
    config: TrainingConfig
    consent_id: str
    self_report: int | None
    events: tuple[TrainingEvent, ...]
    fixes: tuple[GpsFix, ...]
    route_length_m: float
    subpaths: tuple[SubPath, ...]
    landmarks: tuple[LandmarkRef, ...]
    mistake_window_m: float

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "way_id": self.way_id,
            "route_id": self.route_id,
            "route_version": self.route_version,
            "started_ts": self.started_ts,
            "ended_ts": self.ended_ts,
            "config": self.config.to_dict(),
            "consent_id": self.consent_id,
            "self_report": self.self_report,
            "events": [e.to_dict() for e in self.events],
            "fixes": [
                {"ts_ms": f.ts, "lat": f.point.lat, "lon": f.point.lon, "accuracy_m": f.accuracy}
                for f in self.fixes
            ],
            "route_length_m": self.route_length_m,
            "subpaths": [s.to_dict() for s in self.subpaths],
            "landmarks": [
                {"poi_id": l.poi_id, "along_m": l.along_m, "radius_m": l.radius_m}
                for l in self.landmarks
            ],
            "mistake_window_m": self.mistake_window_m,
        }

    @staticmethod
    def from_dict(d: dict) -> "SessionRecord":
        from .geo import GeoPoint

        return SessionRecord(
            session_id=d["session_id"],
            way_id=d["way_id"],
            route_id=d["route_id"],
            route_version=d["route_version"],
            started_ts=d["started_ts"],
            ended_ts=d["ended_ts"],
            config=TrainingConfig.from_dict(d["config"]),
            consent_id=d["consent_id"],
            self_report=d["self_report"],
            events=tuple(TrainingEvent.from_dict(e) for e in d["events"]),
            fixes=tuple(
                GpsFix(GeoPoint(f["lat"], f["lon"]), f["ts_ms"], f.get("accuracy_m"))
                for f in d["fixes"]
            ),
            route_length_m=d["route_length_m"],
            subpaths=tuple(SubPath.from_dict(s) for s in d["subpaths"]),
            landmarks=tuple(
                LandmarkRef(l["poi_id"], l["along_m"], l["radius_m"]) for l in d["landmarks"]
            ),
            mistake_window_m=d["mistake_window_m"],
        )


@dataclass
class _PoiRuntime:
    poi: Poi
    along_m: float
    mode: SupportMode
    inside: bool = False
    triggered: bool = False


@dataclass
class _PendingQuiz:
    quiz_id: str
    poi_id: str
    correct_option: str
    withheld: dict  # instruction payload to deliver on a wrong answer


@dataclass
class _ArmedReward:
    poi_id: str
    along_m: float


class TrainingSession:
    """Mutable session state; all mutation happens through the public ops."""

    def __init__(
        self,
        session_id: str,
        route: RouteDefinition,
        config: TrainingConfig,
        consent_id: str,
        settings: EngineSettings,
        started_ts: int,
    ):
        self.id = session_id
        self.route = route
        self.config = config
        self.consent_id = consent_id
        self.settings = settings
        self.started_ts = started_ts

        self._events: list[TrainingEvent] = []
        self._positions: list[dict | None] = []  # per-event feed snapshot
        self._seq = 0
        self._fixes: list[GpsFix] = []
        self._ended = False
        self._last_event_ts = started_ts
        self._last_fix_ts: int | None = None

        self._watermark = 0.0
        self._last_proj: dict | None = None
        self._off_track = False
        self._off_count = 0
        self._open_off_track_along: float | None = None
        self._open_off_track_subpath_start: float | None = None

        self._pending_quiz: _PendingQuiz | None = None
        self._quiz_counter = 0
        self._armed: list[_ArmedReward] = []

        self._pois = [
            _PoiRuntime(
                poi=p,
                along_m=route.position_of(p.id),
                mode=subpath_at(route, route.position_of(p.id)).mode,
            )
            for p in route.pois
        ]
        self._landmarks = [
            r for r in self._pois if r.poi.kind is PoiKind.LANDMARK
        ]

    # ------------------------------------------------------------- helpers

    @property
    def events(self) -> list[TrainingEvent]:
        return list(self._events)

    @property
    def envelopes(self) -> list[tuple[TrainingEvent, dict | None]]:
        return list(zip(self._events, self._positions))

    @property
    def ended(self) -> bool:
        return self._ended

    @property
    def watermark_m(self) -> float:
        return self._watermark

    @property
    def off_track(self) -> bool:
        return self._off_track

    def target_poi_index(self) -> int:
        for i, r in enumerate(self._pois):
            if r.along_m > self._watermark:
                return i
        return len(self._pois)

    def _emit(self, ts: int, type_: str, payload: dict) -> TrainingEvent:
        event = TrainingEvent(ts=ts, session_id=self.id, seq=self._seq, type=type_, payload=payload)
        self._seq += 1
        self._events.append(event)
        self._positions.append(self._last_proj)
        self._last_event_ts = ts
        return event

    def _require_active(self) -> None:
        if self._ended:
            raise StateError("session already ended")

    def _op_ts(self, ts: int | None) -> int:
        if ts is None:
            return self._last_event_ts
        if ts < self._last_event_ts:
            raise OrderingError(f"ts {ts} before last event ts {self._last_event_ts}")
        return ts

    def _attribute_landmark(self, along_m: float) -> LandmarkRef | None:
        """Landmark whose decision window covers an along-track position.

        The window opens at the geofence edge (a wrong turn happens at the
        decision point itself, where progress may sit slightly before the
        landmark) and extends the mistake window past it.
        """
        best: _PoiRuntime | None = None
        for lm in self._landmarks:
            lo = lm.along_m - lm.poi.radius_m
            hi = lm.along_m + self.settings.mistake_window_m
            if lo <= along_m <= hi and (best is None or lm.along_m > best.along_m):
                best = lm
        if best is None:
            return None
        return LandmarkRef(best.poi.id, best.along_m, best.poi.radius_m)

    def _recovery_payload(self, along_m: float) -> dict:
        target = self.route.geometry.point_at(along_m)
        return {
            "options": ["back_on_track", "help"],
            "target": {"lat": target.lat, "lon": target.lon, "along_m": along_m},
        }

    # ----------------------------------------------------------------- ops

    def ingest_fix(self, fix: GpsFix) -> list[TrainingEvent]:
        """Process one fix; returns the events it produced, in order."""
        self._require_active()
        if self._last_fix_ts is not None and fix.ts <= self._last_fix_ts:
            raise OrderingError(f"fix ts {fix.ts} not after {self._last_fix_ts}")
        if fix.ts < self.started_ts:
            raise OrderingError("fix predates the session start")
        before = len(self._events)
        s = self.settings

        gap_ms = None
        if self._last_fix_ts is not None:
            gap_ms = fix.ts - self._last_fix_ts

        # project first so every event from this fix carries a fresh snapshot
        lo = max(0.0, self._watermark - s.projection_window_m)
        hi = min(self.route.length_m, self._watermark + s.projection_window_m)
        proj = project_onto_polyline(fix.point, self.route.geometry, (lo, hi))
        self._last_proj = {
            "ts_ms": fix.ts,
            "lat": fix.point.lat,
            "lon": fix.point.lon,
            "along_m": proj.along_track,
            "cross_m": proj.cross_track,
            "watermark_m": self._watermark,
            "on_track": not self._off_track,
        }

        if gap_ms is not None and gap_ms / 1000.0 > s.signal_gap_s:
            self._emit(
                fix.ts,
                SIGNAL_LOST,
                {"gap_s": gap_ms / 1000.0, "last_fix_ts": self._last_fix_ts},
            )
            self._emit(fix.ts, SIGNAL_RESTORED, {})
        self._last_fix_ts = fix.ts
        self._fixes.append(fix)

        # progress only counts while the fix is close to the route
        if proj.cross_track < s.watermark_max_cross_m:
            self._watermark = max(self._watermark, proj.along_track)
        self._last_proj["watermark_m"] = self._watermark

        # off-track detection: sustained large offsets begin an episode,
        # a single near fix ends it
        if not self._off_track:
            if proj.cross_track >= s.off_track_cross_m:
                self._off_count += 1
                if self._off_count >= s.off_track_fix_count:
                    self._begin_off_track(fix.ts, proj.cross_track)
            else:
                self._off_count = 0
        else:
            if proj.cross_track < s.back_on_track_m:
                self._emit(
                    fix.ts,
                    OFF_TRACK_END,
                    {"resolution": "self", "along_m": proj.along_track},
                )
                self._off_track = False
                self._off_count = 0
                self._open_off_track_along = None
                self._last_proj["on_track"] = True

        # POI geofences, evaluated against the raw fix position
        for rt in self._pois:
            d = haversine_distance(fix.point, rt.poi.coordinate)
            if not rt.inside:
                if d <= rt.poi.radius_m:
                    rt.inside = True
                    if not rt.triggered:
                        rt.triggered = True
                        self._on_poi_entry(fix.ts, rt)
            else:
                if d > rt.poi.radius_m + s.geofence_exit_slack_m:
                    rt.inside = False

        # commit pending rewards once enough clean progress accumulated
        if not self._off_track:
            still_armed: list[_ArmedReward] = []
            for armed in self._armed:
                if self._watermark >= armed.along_m + s.reward_commit_m:
                    self._emit(fix.ts, REWARD, {"poi_id": armed.poi_id, "along_m": armed.along_m})
                else:
                    still_armed.append(armed)
            self._armed = still_armed

        return self._events[before:]

    def _begin_off_track(self, ts: int, cross_m: float) -> None:
        start_along = self._watermark
        attributed = self._attribute_landmark(start_along)
        payload = {
            "cross_track_m": cross_m,
            "start_along_m": start_along,
            "attributed_poi": attributed.poi_id if attributed else None,
        }
        self._emit(ts, OFF_TRACK_BEGIN, payload)
        self._off_track = True
        self._off_count = 0
        self._open_off_track_along = start_along
        if self._last_proj is not None:
            self._last_proj["on_track"] = False
        if attributed is not None:
            remaining: list[_ArmedReward] = []
            for armed in self._armed:
                if armed.poi_id == attributed.poi_id:
                    self._emit(
                        ts,
                        MISTAKE_ALERT,
                        {"poi_id": armed.poi_id, "along_m": armed.along_m},
                    )
                else:
                    remaining.append(armed)
            self._armed = remaining
        self._emit(ts, RECOVERY_PROMPT, self._recovery_payload(start_along))

    def _on_poi_entry(self, ts: int, rt: _PoiRuntime) -> None:
        poi = rt.poi
        mode = rt.mode
        if mode is SupportMode.MUTE:
            return  # silence: no alert, no content; safety machinery stays on
        self._emit(
            ts,
            VICINITY_ALERT,
            {"poi_id": poi.id, "kind": poi.kind.value, "mode": mode.value, "along_m": rt.along_m},
        )
        is_landmark = poi.kind is PoiKind.LANDMARK
        if mode is SupportMode.ACTIONABLE:
            payload = instruction_payload(self.route, poi)
            self._emit(ts, INSTRUCTION if is_landmark else REASSURANCE, payload)
        elif mode is SupportMode.QUIZ:
            if is_landmark:
                self._prompt_quiz(ts, rt)
            else:
                self._emit(ts, REASSURANCE, instruction_payload(self.route, poi))
        elif mode is SupportMode.REWARD:
            if is_landmark:
                self._armed.append(_ArmedReward(poi_id=poi.id, along_m=rt.along_m))
            # reassurances in reward spans get the alert and nothing else

    def _prompt_quiz(self, ts: int, rt: _PoiRuntime) -> None:
        if self._pending_quiz is not None:
            # only one quiz can be open; the stale one closes unanswered
            self._auto_close_quiz(ts)
        self._quiz_counter += 1
        quiz_id = f"{self.id}-quiz{self._quiz_counter}"
        rng = random.Random(f"{self.id}:{rt.poi.id}")
        others = [p for p in self._pois if p.poi.id != rt.poi.id]
        distractors = rng.sample(others, min(2, len(others)))
        options = [(rt.poi.id, rt.poi.photos[0] if rt.poi.photos else None)]
        for d in distractors:
            options.append((d.poi.id, d.poi.photos[0] if d.poi.photos else None))
        rng.shuffle(options)
        labels = "abc"
        choices = [
            {"id": labels[i], "poi_id": pid, "photo": photo}
            for i, (pid, photo) in enumerate(options)
        ]
        correct = next(c["id"] for c in choices if c["poi_id"] == rt.poi.id)
        self._pending_quiz = _PendingQuiz(
            quiz_id=quiz_id,
            poi_id=rt.poi.id,
            correct_option=correct,
            withheld=instruction_payload(self.route, rt.poi),
        )
        self._emit(
            ts,
            QUIZ_PROMPT,
            {"quiz_id": quiz_id, "poi_id": rt.poi.id, "choices": choices},
        )

    def _auto_close_quiz(self, ts: int) -> None:
        pending = self._pending_quiz
        assert pending is not None
        self._emit(
            ts,
            QUIZ_ANSWER,
            {
                "quiz_id": pending.quiz_id,
                "poi_id": pending.poi_id,
                "correct": False,
                "choice": None,
                "auto_closed": True,
            },
        )
        self._pending_quiz = None

    def answer_quiz(self, quiz_id: str, choice: str, ts: int | None = None) -> list[TrainingEvent]:
        """Answer the open quiz; a wrong answer releases the withheld
        instruction as assistance."""
        self._require_active()
        ts = self._op_ts(ts)
        pending = self._pending_quiz
        if pending is None:
            raise StateError("no quiz is open")
        if pending.quiz_id != quiz_id:
            raise StateError(f"quiz {quiz_id} is not the open quiz")
        before = len(self._events)
        correct = choice == pending.correct_option
        self._emit(
            ts,
            QUIZ_ANSWER,
            {
                "quiz_id": quiz_id,
                "poi_id": pending.poi_id,
                "correct": correct,
                "choice": choice,
            },
        )
        if not correct:
            payload = dict(pending.withheld)
            payload["fallback"] = True
            payload["quiz_id"] = quiz_id
            self._emit(ts, INSTRUCTION, payload)
        self._pending_quiz = None
        return self._events[before:]

    def report_unexpected(self, kind: UnexpectedKind | str, ts: int | None = None) -> list[TrainingEvent]:
        """User-initiated trouble report; prompts recovery, never double-opens
        an off-track episode."""
        self._require_active()
        kind = UnexpectedKind(kind)
        ts = self._op_ts(ts)
        before = len(self._events)
        self._emit(
            ts, UNEXPECTED_REPORT, {"kind": kind.value, "along_m": self._watermark}
        )
        self._emit(ts, RECOVERY_PROMPT, self._recovery_payload(self._watermark))
        return self._events[before:]

    def request_help(self, reason: str = "", ts: int | None = None) -> list[TrainingEvent]:
        """The help option of a recovery prompt; the session stays active."""
        self._require_active()
        ts = self._op_ts(ts)
        before = len(self._events)
        self._emit(ts, HELP_REQUEST, {"reason": reason, "along_m": self._watermark})
        return self._events[before:]

    def activate_ar(self, ts: int | None = None) -> list[TrainingEvent]:
        """Log an augmentation view activation; counted as assistance."""
        self._require_active()
        if Modality.AR not in self.config.modalities:
            raise ModalityError("augmentation is not part of this session's modalities")
        ts = self._op_ts(ts)
        before = len(self._events)
        self._emit(ts, AR_ACTIVATED, {"along_m": self._watermark})
        return self._events[before:]

    def log_assist(
        self, source: AssistSource | str, note: str = "", ts: int | None = None
    ) -> list[TrainingEvent]:
        """Record trainer help. Ends an open off-track episode as assisted.

        Raises:
            RoleError: the source does not match the supervision level.
        """
        self._require_active()
        source = AssistSource(source)
        sup = self.config.supervision
        if sup is Supervision.APP_ONLY:
            raise RoleError("app-only sessions have no trainer to assist")
        if sup is Supervision.IN_PERSON and source is not AssistSource.IN_PERSON_TRAINER:
            raise RoleError("an in-person session takes assists from the in-person trainer")
        if sup is Supervision.REMOTE and source is not AssistSource.REMOTE_TRAINER:
            raise RoleError("a remote session takes assists from the remote trainer")
        ts = self._op_ts(ts)
        before = len(self._events)
        self._emit(
            ts, ASSIST_LOGGED, {"source": source.value, "note": note, "along_m": self._watermark}
        )
        if self._off_track:
            self._emit(
                ts, OFF_TRACK_END, {"resolution": "assisted", "along_m": self._watermark}
            )
            self._off_track = False
            self._off_count = 0
            self._open_off_track_along = None
        return self._events[before:]

    def end(self, self_report: int | None = None, ts: int | None = None) -> SessionRecord:
        """Close the session and freeze its record."""
        self._require_active()
        if self_report is not None and not 1 <= self_report <= 5:
            raise ContractViolation("self-reported confidence must be in 1..5")
        ts = self._op_ts(ts)
        if self._pending_quiz is not None:
            self._auto_close_quiz(ts)
        self._emit(
            ts,
            SESSION_END,
            {"confidence": self_report, "ended_off_track": self._off_track},
        )
        self._ended = True
        return SessionRecord(
            session_id=self.id,
            way_id=self.route.way_id,
            route_id=self.route.id,
            route_version=self.route.version,
            started_ts=self.started_ts,
            ended_ts=ts,
            config=self.config,
            consent_id=self.consent_id,
            self_report=self_report,
            events=tuple(self._events),
            fixes=tuple(self._fixes),
            route_length_m=self.route.length_m,
            subpaths=self.route.subpaths,
            landmarks=tuple(
                LandmarkRef(r.poi.id, r.along_m, r.poi.radius_m) for r in self._landmarks
            ),
            mistake_window_m=self.settings.mistake_window_m,
        )


def begin_session(
    route: RouteDefinition,
    config: TrainingConfig,
    consent: ConsentRecord | None,
    ledger: ConsentLedger,
    settings: EngineSettings | None = None,
    session_id: str | None = None,
    started_ts: int | None = None,
) -> TrainingSession:
    """Open a training session on a working route.

    Consent is spent here, atomically: the same record can never back a
    second session. The start timestamp defaults to the grant timestamp so
    that fully scripted runs stay clock-free.

    Raises:
        StateError: route is not a working route.
        ValidationFailed: the route does not validate (defensive; finalization
            should make this impossible).
        ConsentError: consent missing, wrong scope, spent, or stale.
        ModalityError: raised by TrainingConfig for augmentation-only setups.
    """
    if route.status is not RouteStatus.WORKING:
        raise StateError(f"training needs a working route, got {route.status.value}")
    report = validate_route(route)
    if not report.ok:
        raise ValidationFailed(report)
    if consent is None:
        raise ConsentError("training requires a consent record")
    if consent.scope is not ConsentScope.TRAINING_TELEMETRY:
        raise ConsentError(f"consent scope {consent.scope.value} does not cover training")
    if started_ts is None:
        started_ts = consent.granted_ts
    if abs(started_ts - consent.granted_ts) > CONSENT_MAX_AGE_MS:
        raise ConsentError("consent expired: grant is older than one day")
    if session_id is None:
        digest = sha256_hex(f"{route.id}:{route.version}:{consent.id}".encode())[:12]
        session_id = f"ts-{digest}"
    ledger.spend(consent, session_id)
    settings = settings or EngineSettings()
    session = TrainingSession(
        session_id=session_id,
        route=route,
        config=config,
        consent_id=consent.id,
        settings=settings,
        started_ts=started_ts,
    )
    session._emit(
        started_ts,
        SESSION_START,
        {
            "route_id": route.id,
            "route_version": route.version,
            "way_id": route.way_id,
            "supervision": config.supervision.value,
            "modalities": sorted(m.value for m in config.modalities),
            "consent_id": consent.id,
        },
    )
    return session
