"""Ways, points of interest, sub-paths, and route definitions.

A way is a directional origin/destination pair; a route definition is one
concrete, negotiated realization of it: geometry plus ordered POIs plus a
partition of the route into sub-paths, each with its own support mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from . import config as cfg
from .errors import ContractViolation, NotFoundError, ValidationFailed
from .geo import GeoPoint, Polyline, project_onto_polyline


class PoiKind(str, Enum):
    LANDMARK = "landmark"
    REASSURANCE = "reassurance"
    CANDIDATE = "candidate"


class PoiStatus(str, Enum):
    PENDING = "pending"
    CONFIRMED = "confirmed"
    REJECTED = "rejected"


class SupportMode(str, Enum):
    ACTIONABLE = "actionable"
    QUIZ = "quiz"
    REWARD = "reward"
    MUTE = "mute"


# ordered from most to least assistance; adaptation moves along this ladder
SUPPORT_LADDER = (
    SupportMode.ACTIONABLE,
    SupportMode.QUIZ,
    SupportMode.REWARD,
    SupportMode.MUTE,
)


class RouteStatus(str, Enum):
    DRAFT = "draft"
    UNDER_NEGOTIATION = "under_negotiation"
    WORKING = "working"


@dataclass(frozen=True)
class Way:
    """A directional walking goal. The reverse direction is a different way."""

    id: str
    origin_label: str
    origin: GeoPoint
    destination_label: str
    destination: GeoPoint
    owner_user_id: str
    direction_note: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "origin_label": self.origin_label,
            "origin": {"lat": self.origin.lat, "lon": self.origin.lon},
            "destination_label": self.destination_label,
            "destination": {"lat": self.destination.lat, "lon": self.destination.lon},
            "owner_user_id": self.owner_user_id,
            "direction_note": self.direction_note,
        }

    @staticmethod
    def from_dict(d: dict) -> "Way":
        return Way(
            id=d["id"],
            origin_label=d["origin_label"],
            origin=GeoPoint(d["origin"]["lat"], d["origin"]["lon"]),
            destination_label=d["destination_label"],
            destination=GeoPoint(d["destination"]["lat"], d["destination"]["lon"]),
            owner_user_id=d["owner_user_id"],
            direction_note=d.get("direction_note", ""),
        )


@dataclass(frozen=True)
class Poi:
    """A point of interest captured on a walk.

    photos holds asset ids; the first one is the primary photo shown on cards.
    """

    id: str
    coordinate: GeoPoint
    captured_ts: int
    kind: PoiKind
    photos: tuple[str, ...]
    instruction: str = ""
    symbol: str | None = None
    audio: str | None = None
    notes: str = ""
    status: PoiStatus = PoiStatus.PENDING
    radius_m: float = cfg.DEFAULT_POI_RADIUS_M

    def __post_init__(self):
        object.__setattr__(self, "photos", tuple(self.photos))

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "lat": self.coordinate.lat,
            "lon": self.coordinate.lon,
            "ts_ms": self.captured_ts,
            "kind": self.kind.value,
            "status": self.status.value,
            "radius_m": self.radius_m,
            "photos": list(self.photos),
            "instruction": self.instruction,
            "notes": self.notes,
        }
        if self.symbol is not None:
            d["symbol"] = self.symbol
        if self.audio is not None:
            d["audio"] = self.audio
        return d

    @staticmethod
    def from_dict(d: dict) -> "Poi":
        return Poi(
            id=d["id"],
            coordinate=GeoPoint(d["lat"], d["lon"]),
            captured_ts=d["ts_ms"],
            kind=PoiKind(d["kind"]),
            photos=tuple(d["photos"]),
            instruction=d.get("instruction", ""),
            symbol=d.get("symbol"),
            audio=d.get("audio"),
            notes=d.get("notes", ""),
            status=PoiStatus(d["status"]),
            radius_m=d["radius_m"],
        )


@dataclass(frozen=True)
class SubPath:
    """Half-open along-track interval [start_m, end_m) with a support mode."""

    start_m: float
    end_m: float
    mode: SupportMode

    def __post_init__(self):
        if self.end_m <= self.start_m:
            raise ContractViolation("sub-path must have positive length")

    def to_dict(self) -> dict:
        return {"start_m": self.start_m, "end_m": self.end_m, "mode": self.mode.value}

    @staticmethod
    def from_dict(d: dict) -> "SubPath":
        return SubPath(d["start_m"], d["end_m"], SupportMode(d["mode"]))


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)


@dataclass(frozen=True)
class RouteDefinition:
    """One realization of a way. Immutable; edits produce a new version."""

    id: str
    way_id: str
    geometry: Polyline
    pois: tuple[Poi, ...]
    subpaths: tuple[SubPath, ...] = ()
    status: RouteStatus = RouteStatus.DRAFT
    version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pois", tuple(self.pois))
        object.__setattr__(self, "subpaths", tuple(self.subpaths))
        # along-track positions are derived from geometry, never stored
        positions = tuple(
            project_onto_polyline(p.coordinate, self.geometry).along_track for p in self.pois
        )
        object.__setattr__(self, "_positions", positions)

    @property
    def length_m(self) -> float:
        return self.geometry.length_m

    def position_of(self, poi_id: str) -> float:
        for poi, along in zip(self.pois, self._positions):
            if poi.id == poi_id:
                return along
        raise NotFoundError(f"no such POI on route: {poi_id}")

    def poi_by_id(self, poi_id: str) -> Poi:
        for poi in self.pois:
            if poi.id == poi_id:
                return poi
        raise NotFoundError(f"no such POI on route: {poi_id}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "way_id": self.way_id,
            "status": self.status.value,
            "version": self.version,
            "geometry": [{"lat": v.lat, "lon": v.lon} for v in self.geometry.vertices],
            "pois": [p.to_dict() for p in self.pois],
            "subpaths": [s.to_dict() for s in self.subpaths],
        }

    @staticmethod
    def from_dict(d: dict) -> "RouteDefinition":
        return RouteDefinition(
            id=d["id"],
            way_id=d["way_id"],
            geometry=Polyline([GeoPoint(v["lat"], v["lon"]) for v in d["geometry"]]),
            pois=tuple(Poi.from_dict(p) for p in d["pois"]),
            subpaths=tuple(SubPath.from_dict(s) for s in d["subpaths"]),
            status=RouteStatus(d["status"]),
            version=d["version"],
        )


_EPS = 1e-6


def validate_route(route: RouteDefinition) -> ValidationReport:
    """Check every structural rule; collects violations instead of raising."""
    out: list[Violation] = []
    lo_r, hi_r = cfg.POI_RADIUS_RANGE_M

    seen_ids: set[str] = set()
    for poi, along in zip(route.pois, route._positions):
        if poi.id in seen_ids:
            out.append(Violation("duplicate-poi-id", poi.id, "POI id repeats"))
        seen_ids.add(poi.id)
        if not poi.photos:
            out.append(Violation("photo-required", poi.id, "a POI needs at least one photo"))
        if poi.kind is PoiKind.LANDMARK and not poi.instruction.strip():
            out.append(
                Violation("instruction-required", poi.id, "landmarks need an instruction")
            )
        if not lo_r <= poi.radius_m <= hi_r:
            out.append(
                Violation(
                    "radius-out-of-range",
                    poi.id,
                    f"radius {poi.radius_m} outside [{lo_r}, {hi_r}]",
                )
            )
        cross = project_onto_polyline(poi.coordinate, route.geometry).cross_track
        if cross > cfg.POI_MAX_CROSS_TRACK_M:
            out.append(
                Violation("poi-off-route", poi.id, f"{cross:.1f} m from the geometry")
            )

    for (a, pa), (b, pb) in zip(
        zip(route.pois, route._positions), zip(route.pois[1:], route._positions[1:])
    ):
        if pb < pa - _EPS:
            out.append(
                Violation("poi-order", b.id, f"{b.id} at {pb:.1f} m before {a.id} at {pa:.1f} m")
            )

    if route.subpaths:
        ordered = sorted(route.subpaths, key=lambda s: s.start_m)
        if abs(ordered[0].start_m) > _EPS:
            out.append(Violation("subpath-span", None, "coverage must start at 0"))
        for s, t in zip(ordered, ordered[1:]):
            if t.start_m < s.end_m - _EPS:
                out.append(
                    Violation("subpath-overlap", None, f"{s.end_m:.1f} m overlaps {t.start_m:.1f} m")
                )
            elif t.start_m > s.end_m + _EPS:
                out.append(
                    Violation("subpath-gap", None, f"gap between {s.end_m:.1f} and {t.start_m:.1f} m")
                )
        if abs(ordered[-1].end_m - route.length_m) > _EPS:
            out.append(
                Violation(
                    "subpath-span",
                    None,
                    f"coverage ends at {ordered[-1].end_m:.1f}, route is {route.length_m:.1f} m",
                )
            )
    elif route.status is RouteStatus.WORKING:
        out.append(Violation("subpath-missing", None, "working routes need sub-path coverage"))

    if route.status is RouteStatus.WORKING:
        for poi in route.pois:
            if poi.status is PoiStatus.PENDING:
                out.append(Violation("working-pending-poi", poi.id, "undecided POI"))
            elif poi.status is PoiStatus.REJECTED:
                out.append(Violation("working-rejected-poi", poi.id, "rejected POI still present"))
        if not any(
            p.kind is PoiKind.LANDMARK and p.status is PoiStatus.CONFIRMED for p in route.pois
        ):
            out.append(Violation("working-no-landmark", None, "no confirmed landmark"))

    return ValidationReport(tuple(out))


def decision_points(route: RouteDefinition) -> list[Poi]:
    """Confirmed landmarks in along-track order.

    Raises:
        ValidationFailed: when the route itself does not validate.
    """
    report = validate_route(route)
    if not report.ok:
        raise ValidationFailed(report)
    return [
        poi
        for poi in route.pois
        if poi.kind is PoiKind.LANDMARK and poi.status is PoiStatus.CONFIRMED
    ]


def subpath_at(route: RouteDefinition, along_m: float) -> SubPath:
    """The sub-path containing an along-track position.

    Intervals are half-open; the final one also owns the route end itself.

    Raises:
        ContractViolation: position outside [0, length] or no coverage at all.
    """
    if not route.subpaths:
        raise ContractViolation("route has no sub-path coverage")
    if along_m < -_EPS or along_m > route.length_m + _EPS:
        raise ContractViolation(f"position {along_m} outside [0, {route.length_m}]")
    ordered = sorted(route.subpaths, key=lambda s: s.start_m)
    for sp in ordered:
        if sp.start_m - _EPS <= along_m < sp.end_m - _EPS:
            return sp
    return ordered[-1]


def instruction_payload(route: RouteDefinition, poi: Poi) -> dict:
    """Exactly the content a trainee's device shows for this POI.

    Built in one place so that the negotiation preview and the live training
    event carry byte-identical payloads.
    """
    payload = {
        "poi_id": poi.id,
        "kind": poi.kind.value,
        "text": poi.instruction,
        "symbol": poi.symbol,
        "photo": poi.photos[0] if poi.photos else None,
        "along_m": route.position_of(poi.id),
    }
    if poi.audio is not None:
        payload["audio"] = poi.audio
    return payload


def order_pois(route: RouteDefinition) -> RouteDefinition:
    """Reorder POIs by their along-track projection (stable for ties)."""
    indexed = sorted(
        range(len(route.pois)), key=lambda i: (route._positions[i], i)
    )
    return replace(route, pois=tuple(route.pois[i] for i in indexed))
