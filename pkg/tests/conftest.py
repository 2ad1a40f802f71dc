"""Shared builders for routes, walks, and sessions used across the suite."""

from __future__ import annotations

import math

import pytest

from routetrainer.geo import GeoPoint, GpsFix, Polyline, destination_point
from routetrainer.model import (
    Poi,
    PoiKind,
    PoiStatus,
    RouteDefinition,
    RouteStatus,
    SubPath,
    SupportMode,
    Way,
)

BASE = GeoPoint(52.02, 8.5325)


def straight_line(length_m: float, bearing_deg: float = 90.0, start: GeoPoint = BASE,
                  vertex_every_m: float = 50.0) -> Polyline:
    """A polyline of evenly spaced vertices along one bearing."""
    n = max(1, int(round(length_m / vertex_every_m)))
    pts = [start]
    for i in range(1, n + 1):
        pts.append(destination_point(start, bearing_deg, length_m * i / n))
    return Polyline(pts)


def bent_line(leg_m: float = 400.0, start: GeoPoint = BASE) -> Polyline:
    """Two legs with a right-angle corner, vertices every 50 m."""
    corner = destination_point(start, 90.0, leg_m)
    pts = [start]
    for i in range(1, int(leg_m // 50) + 1):
        pts.append(destination_point(start, 90.0, 50.0 * i))
    for i in range(1, int(leg_m // 50) + 1):
        pts.append(destination_point(corner, 0.0, 50.0 * i))
    return Polyline(pts)


def poi_on(line: Polyline, along_m: float, poi_id: str, kind: PoiKind,
           status: PoiStatus = PoiStatus.CONFIRMED, instruction: str | None = None,
           radius_m: float = 25.0, photos: tuple[str, ...] | None = None) -> Poi:
    if instruction is None:
        instruction = f"At {poi_id} continue along the walkway" if kind is PoiKind.LANDMARK else ""
    return Poi(
        id=poi_id,
        coordinate=line.point_at(along_m),
        captured_ts=1_700_000_000_000 + int(along_m) * 1000,
        kind=kind,
        photos=photos if photos is not None else (f"photo-{poi_id}",),
        instruction=instruction,
        status=status,
        radius_m=radius_m,
    )


def working_route(
    route_id: str = "route-1",
    way_id: str = "way-1",
    length_m: float = 1000.0,
    landmark_at: tuple[float, ...] = (250.0, 600.0),
    reassurance_at: tuple[float, ...] = (450.0,),
    subpaths: tuple[SubPath, ...] | None = None,
    bearing_deg: float = 90.0,
) -> RouteDefinition:
    line = straight_line(length_m, bearing_deg)
    pois = []
    for i, along in enumerate(landmark_at):
        pois.append(poi_on(line, along, f"lm{i}", PoiKind.LANDMARK))
    for i, along in enumerate(reassurance_at):
        pois.append(poi_on(line, along, f"re{i}", PoiKind.REASSURANCE))
    pois.sort(key=lambda p: p.captured_ts)
    if subpaths is None:
        subpaths = (SubPath(0.0, line.length_m, SupportMode.ACTIONABLE),)
    return RouteDefinition(
        id=route_id,
        way_id=way_id,
        geometry=line,
        pois=tuple(pois),
        subpaths=subpaths,
        status=RouteStatus.WORKING,
        version=3,
    )


def draft_route(
    route_id: str = "draft-1",
    way_id: str = "way-1",
    length_m: float = 600.0,
    n_landmarks: int = 2,
    n_reassurances: int = 1,
) -> RouteDefinition:
    line = straight_line(length_m)
    pois = []
    spacing = length_m / (n_landmarks + n_reassurances + 1)
    idx = 0
    for i in range(n_landmarks):
        idx += 1
        pois.append(
            poi_on(line, spacing * idx, f"lm{i}", PoiKind.LANDMARK, status=PoiStatus.PENDING,
                   photos=(f"ph-{i}a", f"ph-{i}b"))
        )
    for i in range(n_reassurances):
        idx += 1
        pois.append(
            poi_on(line, spacing * idx, f"re{i}", PoiKind.REASSURANCE, status=PoiStatus.PENDING)
        )
    return RouteDefinition(
        id=route_id,
        way_id=way_id,
        geometry=line,
        pois=tuple(pois),
        status=RouteStatus.DRAFT,
        version=1,
    )


def make_way(way_id: str = "way-1") -> Way:
    return Way(
        id=way_id,
        origin_label="home",
        origin=BASE,
        destination_label="workshop",
        destination=destination_point(BASE, 90.0, 1000.0),
        owner_user_id="user-1",
    )


def trace_fixes(line: Polyline, step_m: float = 10.0, start_ts: int = 1_700_000_000_000,
                interval_ms: int = 5000) -> list[GpsFix]:
    """Noise-free fixes walked along a polyline."""
    out = []
    n = int(round(line.length_m / step_m))
    for i in range(n + 1):
        out.append(GpsFix(line.point_at(min(i * step_m, line.length_m)),
                          start_ts + i * interval_ms))
    return out


# ------------------------------------------------- live-session test drivers

SESSION_T0 = 1_700_000_100_000
DISCLOSURE = "This session records location and training events."


def make_session(route=None, supervision=None, modalities=None,
                 session_id="tsess-1", started_ts=None, settings=None):
    """A ready training session over a fresh single-use consent."""
    from routetrainer.engine import Modality, Supervision, TrainingConfig, begin_session
    from routetrainer.privacy import ConsentLedger, ConsentScope

    route = route or working_route()
    supervision = supervision or Supervision.IN_PERSON
    modalities = modalities or frozenset({Modality.TEXT, Modality.AUDIO})
    ledger = ConsentLedger()
    consent = ledger.grant(
        user_id="user-1", scope=ConsentScope.TRAINING_TELEMETRY,
        disclosure=DISCLOSURE, granted_ts=SESSION_T0,
    )
    session = begin_session(
        route, TrainingConfig(supervision, modalities), consent, ledger,
        settings=settings, session_id=session_id, started_ts=started_ts,
    )
    return session, route, ledger, consent


def drive(session, route, steps, start_ts=SESSION_T0 + 1_000, interval_ms=5_000):
    """Feed (along_m, cross_offset_m) fixes; returns [(step_index, events)].

    Offsets go north; the standard test routes run east, so the offset is the
    cross-track distance.
    """
    line = route.geometry
    out = []
    for i, (along, cross) in enumerate(steps):
        point = line.point_at(along)
        if cross:
            point = destination_point(point, 0.0, cross)
        events = session.ingest_fix(GpsFix(point, start_ts + i * interval_ms))
        out.append((i, events))
    return out


def on_track(start_m, stop_m, step_m=10.0):
    out = []
    a = start_m
    while a <= stop_m:
        out.append((a, 0.0))
        a += step_m
    return out


def types(events):
    return [e.type for e in events]


def all_events(driven):
    return [e for _, events in driven for e in events]
