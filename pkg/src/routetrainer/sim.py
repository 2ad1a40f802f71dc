"""Deterministic scripted walker.

Generates GPS traces along a working route with seeded noise and scripted
behaviors (wrong turns, pauses, signal loss), keeps ground-truth annotations
about what it did, and can drive a full training session end to end. Given
the same route, profile, and seed, the output is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .canonical import canonical_bytes, canonical_dumps, sha256_hex
from .config import EngineSettings
from .engine import (
    QUIZ_PROMPT,
    SessionRecord,
    TrainingConfig,
    begin_session,
)
from .errors import ContractViolation, ProfileError
from .geo import (
    GeoPoint,
    GpsFix,
    Polyline,
    destination_point,
    fixes_from_csv_text,
    fixes_to_csv_text,
    project_onto_polyline,
)
from .model import RouteDefinition, decision_points
from .privacy import ConsentLedger, ConsentScope

PRNG_ID = "pcg64"  # numpy default_rng; recorded in headers for reproducibility

_SIM_DISCLOSURE = (
    "Simulated session: scripted location and interaction data is processed "
    "to exercise the training pipeline."
)


@dataclass(frozen=True)
class WrongTurn:
    """Leave the route at a decision point along a wrong branch."""

    at_landmark: int  # index into the route's decision points
    bearing_deg: float
    length_m: float
    return_to_route: bool = True


@dataclass(frozen=True)
class Deviate:
    """Leave the route at an arbitrary along-track position."""

    at_m: float
    bearing_deg: float
    length_m: float
    return_to_route: bool = True


@dataclass(frozen=True)
class Pause:
    at_m: float
    duration_s: float


@dataclass(frozen=True)
class SignalLoss:
    """Keep walking but emit no fixes while inside [from_m, to_m)."""

    from_m: float
    to_m: float


Behavior = WrongTurn | Deviate | Pause | SignalLoss


@dataclass(frozen=True)
class QuizPolicy:
    """How the scripted walker answers quizzes."""

    mode: str = "always_correct"  # always_correct | always_wrong | scripted
    script: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.mode not in ("always_correct", "always_wrong", "scripted"):
            raise ContractViolation(f"unknown quiz policy: {self.mode}")

    def answer_correctly(self, index: int) -> bool:
        if self.mode == "always_correct":
            return True
        if self.mode == "always_wrong":
            return False
        if index < len(self.script):
            return self.script[index]
        return True  # script exhausted: default to correct


@dataclass(frozen=True)
class WalkerProfile:
    speed_mps: float = 1.4
    fix_interval_s: float = 1.0
    gps_noise_sigma_m: float = 0.0
    behaviors: tuple[Behavior, ...] = ()
    quiz: QuizPolicy = QuizPolicy()
    start_ts: int = 1_700_000_000_000

    def __post_init__(self):
        if self.speed_mps <= 0:
            raise ContractViolation("speed must be > 0")
        if self.fix_interval_s <= 0:
            raise ContractViolation("fix interval must be > 0")
        if self.gps_noise_sigma_m < 0:
            raise ContractViolation("noise sigma must be >= 0")
        object.__setattr__(self, "behaviors", tuple(self.behaviors))

    def to_dict(self) -> dict:
        rows = []
        for b in self.behaviors:
            if isinstance(b, WrongTurn):
                rows.append(
                    {
                        "type": "wrong_turn",
                        "at_landmark": b.at_landmark,
                        "bearing_deg": b.bearing_deg,
                        "length_m": b.length_m,
                        "return_to_route": b.return_to_route,
                    }
                )
            elif isinstance(b, Deviate):
                rows.append(
                    {
                        "type": "deviate",
                        "at_m": b.at_m,
                        "bearing_deg": b.bearing_deg,
                        "length_m": b.length_m,
                        "return_to_route": b.return_to_route,
                    }
                )
            elif isinstance(b, Pause):
                rows.append({"type": "pause", "at_m": b.at_m, "duration_s": b.duration_s})
            elif isinstance(b, SignalLoss):
                rows.append({"type": "signal_loss", "from_m": b.from_m, "to_m": b.to_m})
        return {
            "speed_mps": self.speed_mps,
            "fix_interval_s": self.fix_interval_s,
            "gps_noise_sigma_m": self.gps_noise_sigma_m,
            "behaviors": rows,
            "quiz": {"mode": self.quiz.mode, "script": list(self.quiz.script)},
            "start_ts": self.start_ts,
        }

    @staticmethod
    def from_dict(d: dict) -> "WalkerProfile":
        behaviors: list[Behavior] = []
        for row in d.get("behaviors", []):
            t = row["type"]
            if t == "wrong_turn":
                behaviors.append(
                    WrongTurn(
                        at_landmark=row["at_landmark"],
                        bearing_deg=row["bearing_deg"],
                        length_m=row["length_m"],
                        return_to_route=row.get("return_to_route", True),
                    )
                )
            elif t == "deviate":
                behaviors.append(
                    Deviate(
                        at_m=row["at_m"],
                        bearing_deg=row["bearing_deg"],
                        length_m=row["length_m"],
                        return_to_route=row.get("return_to_route", True),
                    )
                )
            elif t == "pause":
                behaviors.append(Pause(at_m=row["at_m"], duration_s=row["duration_s"]))
            elif t == "signal_loss":
                behaviors.append(SignalLoss(from_m=row["from_m"], to_m=row["to_m"]))
            else:
                raise ContractViolation(f"unknown behavior type: {t}")
        quiz = d.get("quiz", {})
        return WalkerProfile(
            speed_mps=d.get("speed_mps", 1.4),
            fix_interval_s=d.get("fix_interval_s", 1.0),
            gps_noise_sigma_m=d.get("gps_noise_sigma_m", 0.0),
            behaviors=tuple(behaviors),
            quiz=QuizPolicy(quiz.get("mode", "always_correct"), tuple(quiz.get("script", ()))),
            start_ts=d.get("start_ts", 1_700_000_000_000),
        )

    @property
    def profile_hash(self) -> str:
        return sha256_hex(canonical_bytes(self.to_dict()))


@dataclass(frozen=True)
class OffRouteInterval:
    begin_ts: int
    end_ts: int
    max_cross_m: float
    at_landmark_poi: str | None


@dataclass(frozen=True)
class DecisionOutcome:
    landmark_index: int
    poi_id: str
    outcome: str  # "correct" | "wrong_branch"


@dataclass(frozen=True)
class SignalGap:
    last_ts_before: int
    first_ts_after: int


@dataclass(frozen=True)
class WalkAnnotations:
    off_route: tuple[OffRouteInterval, ...]
    decisions: tuple[DecisionOutcome, ...]
    signal_gaps: tuple[SignalGap, ...]

    def to_dict(self) -> dict:
        return {
            "off_route": [
                {
                    "begin_ts": o.begin_ts,
                    "end_ts": o.end_ts,
                    "max_cross_m": o.max_cross_m,
                    "at_landmark_poi": o.at_landmark_poi,
                }
                for o in self.off_route
            ],
            "decisions": [
                {"landmark_index": d.landmark_index, "poi_id": d.poi_id, "outcome": d.outcome}
                for d in self.decisions
            ],
            "signal_gaps": [
                {"last_ts_before": g.last_ts_before, "first_ts_after": g.first_ts_after}
                for g in self.signal_gaps
            ],
        }


@dataclass(frozen=True)
class ScriptedWalk:
    route_id: str
    route_version: int
    profile_hash: str
    seed: int
    prng: str
    fixes: tuple[GpsFix, ...]
    annotations: WalkAnnotations

    def header(self) -> dict:
        return {
            "route_id": self.route_id,
            "route_version": self.route_version,
            "profile_hash": self.profile_hash,
            "seed": self.seed,
            "prng": self.prng,
        }


@dataclass(frozen=True)
class _PlanStep:
    """A constant-velocity (or stationary) stretch of the walk."""

    duration_s: float
    start: GeoPoint
    end: GeoPoint
    on_route: bool
    emit: bool  # False while the receiver is dark
    anchor_landmark: str | None = None

    def position(self, frac: float) -> GeoPoint:
        return GeoPoint(
            self.start.lat + frac * (self.end.lat - self.start.lat),
            self.start.lon + frac * (self.end.lon - self.start.lon),
        )


def _resolve_behaviors(
    route: RouteDefinition, profile: WalkerProfile
) -> list[tuple[float, Behavior, str | None]]:
    """Anchor every behavior to an along-track position; reject overlaps."""
    landmarks = decision_points(route)
    resolved: list[tuple[float, Behavior, str | None]] = []
    for b in profile.behaviors:
        if isinstance(b, WrongTurn):
            if not 0 <= b.at_landmark < len(landmarks):
                raise ProfileError(f"no decision point with index {b.at_landmark}")
            poi = landmarks[b.at_landmark]
            at = route.position_of(poi.id)
            resolved.append(
                (at, Deviate(at, b.bearing_deg, b.length_m, b.return_to_route), poi.id)
            )
        elif isinstance(b, Deviate):
            resolved.append((b.at_m, b, None))
        elif isinstance(b, Pause):
            resolved.append((b.at_m, b, None))
        elif isinstance(b, SignalLoss):
            if b.to_m <= b.from_m:
                raise ProfileError("signal loss span must have positive length")
            resolved.append((b.from_m, b, None))
    resolved.sort(key=lambda r: r[0])
    spans: list[tuple[float, float]] = []
    for at, b, _ in resolved:
        if isinstance(b, SignalLoss):
            spans.append((b.from_m, b.to_m))
        else:
            spans.append((at, at))
        if at < 0 or at > route.length_m:
            raise ProfileError(f"behavior anchored outside the route: {at} m")
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1 or (a0 == b0 and a1 == b1 and a0 == a1):
            raise ProfileError(f"behaviors overlap near {b0} m along track")
    return resolved


def _build_plan(
    route: RouteDefinition, profile: WalkerProfile
) -> list[_PlanStep]:
    line = route.geometry
    v = profile.speed_mps
    steps: list[_PlanStep] = []
    resolved = _resolve_behaviors(route, profile)

    def walk_on_route(s0: float, s1: float, emit: bool = True) -> None:
        # follow the geometry vertex to vertex so bends stay on the line
        if s1 <= s0:
            return
        cuts = [s0]
        for c in line.cumulative:
            if s0 < c < s1:
                cuts.append(c)
        cuts.append(s1)
        for a, b in zip(cuts, cuts[1:]):
            if b - a <= 0:
                continue
            steps.append(
                _PlanStep(
                    duration_s=(b - a) / v,
                    start=line.point_at(a),
                    end=line.point_at(b),
                    on_route=True,
                    emit=emit,
                )
            )

    cursor = 0.0
    for at, behavior, landmark_poi in resolved:
        if isinstance(behavior, SignalLoss):
            walk_on_route(cursor, behavior.from_m)
            walk_on_route(behavior.from_m, behavior.to_m, emit=False)
            cursor = behavior.to_m
            continue
        walk_on_route(cursor, at)
        cursor = at
        if isinstance(behavior, Pause):
            spot = line.point_at(at)
            steps.append(
                _PlanStep(
                    duration_s=behavior.duration_s,
                    start=spot,
                    end=spot,
                    on_route=True,
                    emit=True,
                )
            )
        elif isinstance(behavior, Deviate):
            spot = line.point_at(at)
            far = destination_point(spot, behavior.bearing_deg, behavior.length_m)
            steps.append(
                _PlanStep(
                    duration_s=behavior.length_m / v,
                    start=spot,
                    end=far,
                    on_route=False,
                    emit=True,
                    anchor_landmark=landmark_poi,
                )
            )
            if behavior.return_to_route:
                steps.append(
                    _PlanStep(
                        duration_s=behavior.length_m / v,
                        start=far,
                        end=spot,
                        on_route=False,
                        emit=True,
                        anchor_landmark=landmark_poi,
                    )
                )
            else:
                return steps  # walk ends off the route
    walk_on_route(cursor, line.length_m)
    return steps


def generate_trace(
    route: RouteDefinition, profile: WalkerProfile, seed: int
) -> ScriptedWalk:
    """Produce the scripted walk for (route, profile, seed).

    Fix positions are the planned true positions plus isotropic Gaussian
    noise drawn from a seeded generator. Annotations describe the plan's
    ground truth, not what a detector saw.
    """
    steps = _build_plan(route, profile)
    total = sum(s.duration_s for s in steps)
    if total <= 0:
        raise ProfileError("the plan has no duration")
    rng = np.random.default_rng(seed)
    interval = profile.fix_interval_s
    line = route.geometry

    boundaries = [0.0]
    for s in steps:
        boundaries.append(boundaries[-1] + s.duration_s)

    fixes: list[GpsFix] = []
    truths: list[tuple[int, GeoPoint, bool]] = []  # (ts, true point, emitted)
    i_step = 0
    n = 0
    while True:
        t = n * interval
        n += 1
        if t > total + interval:
            break
        t_clamped = min(t, total)
        while i_step < len(steps) - 1 and t_clamped > boundaries[i_step + 1]:
            i_step += 1
        step = steps[i_step]
        span = step.duration_s
        frac = 1.0 if span <= 0 else (t_clamped - boundaries[i_step]) / span
        frac = min(max(frac, 0.0), 1.0)
        true_pt = step.position(frac)
        ts = profile.start_ts + round(t * 1000)
        emitted = step.emit
        truths.append((ts, true_pt, emitted))
        if emitted:
            if profile.gps_noise_sigma_m > 0:
                east, north = rng.normal(0.0, profile.gps_noise_sigma_m, 2)
                noisy = _offset_meters(true_pt, east, north)
            else:
                noisy = true_pt
            fixes.append(
                GpsFix(
                    point=noisy,
                    ts=ts,
                    accuracy=profile.gps_noise_sigma_m or None,
                )
            )
        if t >= total:
            break

    annotations = _annotate(route, profile, line, truths, fixes)
    return ScriptedWalk(
        route_id=route.id,
        route_version=route.version,
        profile_hash=profile.profile_hash,
        seed=seed,
        prng=PRNG_ID,
        fixes=tuple(fixes),
        annotations=annotations,
    )


def _offset_meters(p: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    from .geo import M_PER_DEG

    lat = p.lat + north_m / M_PER_DEG
    lon = p.lon + east_m / (M_PER_DEG * math.cos(math.radians(p.lat)))
    # numpy scalars repr differently and would pollute the trace format
    return GeoPoint(float(lat), float(lon))


def _annotate(
    route: RouteDefinition,
    profile: WalkerProfile,
    line: Polyline,
    truths: list[tuple[int, GeoPoint, bool]],
    fixes: list[GpsFix],
) -> WalkAnnotations:
    # true off-route intervals, from noise-free positions
    off: list[OffRouteInterval] = []
    landmarks = decision_points(route)
    lm_by_along = [(route.position_of(p.id), p.id) for p in landmarks]

    open_begin: int | None = None
    max_cross = 0.0
    begin_along = 0.0
    last_ts = truths[0][0] if truths else 0
    for ts, pt, _ in truths:
        cross = project_onto_polyline(pt, line).cross_track
        if cross > 1.0:  # numeric floor: truly off the line
            if open_begin is None:
                open_begin = ts
                max_cross = cross
                begin_along = project_onto_polyline(pt, line).along_track
            else:
                max_cross = max(max_cross, cross)
        else:
            if open_begin is not None:
                off.append(
                    OffRouteInterval(
                        begin_ts=open_begin,
                        end_ts=ts,
                        max_cross_m=max_cross,
                        at_landmark_poi=_nearest_landmark(lm_by_along, begin_along),
                    )
                )
                open_begin = None
                max_cross = 0.0
        last_ts = ts
    if open_begin is not None:
        off.append(
            OffRouteInterval(
                begin_ts=open_begin,
                end_ts=last_ts,
                max_cross_m=max_cross,
                at_landmark_poi=_nearest_landmark(lm_by_along, begin_along),
            )
        )

    wrong_ids = {
        interval.at_landmark_poi
        for interval in off
        if interval.at_landmark_poi is not None
    }
    decisions = tuple(
        DecisionOutcome(
            landmark_index=i,
            poi_id=poi.id,
            outcome="wrong_branch" if poi.id in wrong_ids else "correct",
        )
        for i, poi in enumerate(landmarks)
    )

    gaps: list[SignalGap] = []
    for a, b in zip(fixes, fixes[1:]):
        if (b.ts - a.ts) / 1000.0 > profile.fix_interval_s * 1.5:
            gaps.append(SignalGap(last_ts_before=a.ts, first_ts_after=b.ts))

    return WalkAnnotations(off_route=tuple(off), decisions=decisions, signal_gaps=tuple(gaps))


def _nearest_landmark(
    lm_by_along: list[tuple[float, str]], along: float, slack_m: float = 60.0
) -> str | None:
    best: tuple[float, str] | None = None
    for lm_along, poi_id in lm_by_along:
        d = abs(along - lm_along)
        if d <= slack_m and (best is None or d < best[0]):
            best = (d, poi_id)
    return best[1] if best else None


# ------------------------------------------------------------------- files

def write_walk(walk: ScriptedWalk, path: str | Path) -> Path:
    """Header line + trace CSV; annotations in a sidecar."""
    path = Path(path)
    body = fixes_to_csv_text(walk.fixes)
    path.write_text(canonical_dumps(walk.header()) + "\n" + body, encoding="utf-8")
    sidecar = path.with_suffix(path.suffix + ".annotations.json")
    sidecar.write_text(canonical_dumps(walk.annotations.to_dict()) + "\n", encoding="utf-8")
    return path


def read_walk(path: str | Path) -> tuple[dict, list[GpsFix]]:
    text = Path(path).read_text(encoding="utf-8")
    head, _, body = text.partition("\n")
    return json.loads(head), fixes_from_csv_text(body)


# -------------------------------------------------------------- simulation

def run_simulation(
    route: RouteDefinition,
    config: TrainingConfig,
    profile: WalkerProfile,
    seed: int,
    settings: EngineSettings | None = None,
    session_id: str | None = None,
) -> SessionRecord:
    """Drive a full session: walk the trace, answer quizzes, end cleanly.

    Fully deterministic; identical arguments produce byte-identical event
    logs. Consent is granted and spent internally on a throwaway ledger.
    """
    walk = generate_trace(route, profile, seed)
    ledger = ConsentLedger()
    consent = ledger.grant(
        user_id="sim-user",
        scope=ConsentScope.TRAINING_TELEMETRY,
        disclosure=_SIM_DISCLOSURE,
        granted_ts=profile.start_ts,
        consent_id=f"sim-consent-{route.id}-v{route.version}-{seed}",
    )
    if session_id is None:
        session_id = f"sim-{route.id}-v{route.version}-s{seed}"
    session = begin_session(
        route,
        config,
        consent,
        ledger,
        settings=settings,
        session_id=session_id,
        started_ts=profile.start_ts,
    )
    quiz_index = 0
    for fix in walk.fixes:
        events = session.ingest_fix(fix)
        for event in events:
            if event.type != QUIZ_PROMPT:
                continue
            choices = event.payload["choices"]
            target = event.payload["poi_id"]
            correct_choice = next(c["id"] for c in choices if c["poi_id"] == target)
            if profile.quiz.answer_correctly(quiz_index):
                choice = correct_choice
            else:
                wrong = [c["id"] for c in choices if c["id"] != correct_choice]
                choice = wrong[0] if wrong else "__wrong__"
            session.answer_quiz(event.payload["quiz_id"], choice, ts=fix.ts)
            quiz_index += 1
    last_ts = walk.fixes[-1].ts if walk.fixes else profile.start_ts
    return session.end(self_report=None, ts=last_ts)
