"""Route curation and negotiation.

Curation turns a finished walk into a draft route by replaying the capture
and editing POIs. Negotiation then walks the trainee through every POI, one
screen at a time, and only a fully decided route with at least one confirmed
landmark can be finalized into a working route.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .canonical import canonical_dumps
from .errors import (
    ContractViolation,
    EditRejected,
    IncompleteNegotiation,
    NotFoundError,
    StateError,
    ValidationFailed,
)
from .geo import GeoPoint, Polyline, project_onto_polyline, simplify_trace
from .config import SIMPLIFY_TOLERANCE_M
from .erw import ErwSession, ErwState
from .model import (
    Poi,
    PoiKind,
    PoiStatus,
    RouteDefinition,
    RouteStatus,
    SubPath,
    SupportMode,
    instruction_payload,
    order_pois,
    validate_route,
)


# ---------------------------------------------------------------- playback

@dataclass(frozen=True)
class PoiMarker:
    poi_id: str
    captured_ts: int
    along_m: float
    out_of_order: bool


@dataclass(frozen=True)
class PlaybackPosition:
    along_m: float
    point: GeoPoint
    cross_m: float
    nearest_fix_index: int


@dataclass(frozen=True)
class PlaybackIndex:
    """Scrubbing support for a captured walk; GPS time is the master clock."""

    path: Polyline
    fix_ts: tuple[int, ...]
    fix_along: tuple[float, ...]
    fix_cross: tuple[float, ...]
    markers: tuple[PoiMarker, ...]

    def position_at(self, ts_ms: int) -> PlaybackPosition:
        """Interpolated position for any instant inside the recording.

        Raises:
            ContractViolation: ts outside the recorded span.
        """
        if ts_ms < self.fix_ts[0] or ts_ms > self.fix_ts[-1]:
            raise ContractViolation(
                f"ts {ts_ms} outside recording [{self.fix_ts[0]}, {self.fix_ts[-1]}]"
            )
        i = bisect.bisect_right(self.fix_ts, ts_ms) - 1
        if i >= len(self.fix_ts) - 1:
            i = len(self.fix_ts) - 2
        t0, t1 = self.fix_ts[i], self.fix_ts[i + 1]
        frac = 0.0 if t1 == t0 else (ts_ms - t0) / (t1 - t0)
        along = self.fix_along[i] + frac * (self.fix_along[i + 1] - self.fix_along[i])
        cross = self.fix_cross[i] + frac * (self.fix_cross[i + 1] - self.fix_cross[i])
        nearest = i if frac < 0.5 else i + 1
        return PlaybackPosition(
            along_m=along,
            point=self.path.point_at(along),
            cross_m=cross,
            nearest_fix_index=nearest,
        )


def build_playback_index(
    session: ErwSession, tolerance_m: float = SIMPLIFY_TOLERANCE_M
) -> PlaybackIndex:
    """Index a finished walk for scrubbing and candidate review.

    Markers keep capture order; a marker whose along-track position falls
    behind its predecessor (GPS noise, or a capture made while backtracking)
    is flagged rather than reordered.
    """
    if session.state is not ErwState.FINISHED:
        raise StateError("playback needs a finished session")
    path = simplify_trace(session.fixes, tolerance_m)
    along: list[float] = []
    cross: list[float] = []
    for f in session.fixes:
        proj = project_onto_polyline(f.point, path)
        along.append(proj.along_track)
        cross.append(proj.cross_track)

    markers: list[PoiMarker] = []
    ordered = sorted(session.candidate_pois, key=lambda p: p.captured_ts)
    prev_along = float("-inf")
    for poi in ordered:
        a = project_onto_polyline(poi.coordinate, path).along_track
        markers.append(PoiMarker(poi.id, poi.captured_ts, a, out_of_order=a < prev_along))
        prev_along = max(prev_along, a)

    return PlaybackIndex(
        path=path,
        fix_ts=tuple(f.ts for f in session.fixes),
        fix_along=tuple(along),
        fix_cross=tuple(cross),
        markers=tuple(markers),
    )


# ---------------------------------------------------------------- curation

@dataclass(frozen=True)
class AddPoi:
    poi: Poi


@dataclass(frozen=True)
class RemovePoi:
    poi_id: str


@dataclass(frozen=True)
class EditPoi:
    """Field-level edit; only the provided fields change."""

    poi_id: str
    radius_m: float | None = None
    notes: str | None = None
    photos: tuple[str, ...] | None = None
    symbol: str | None = None
    audio: str | None = None


@dataclass(frozen=True)
class EditInstruction:
    poi_id: str
    instruction: str


@dataclass(frozen=True)
class MovePathVertex:
    index: int
    point: GeoPoint


@dataclass(frozen=True)
class PromoteCandidate:
    poi_id: str
    kind: PoiKind


@dataclass(frozen=True)
class SplitSubPath:
    """Cut the sub-path containing at_m in two; both halves keep its mode."""

    at_m: float


@dataclass(frozen=True)
class MergeSubPaths:
    """Dissolve the boundary at at_m; the joined span takes the left mode."""

    at_m: float


@dataclass(frozen=True)
class SetSubPathMode:
    """Retune one sub-path, addressed by its exact interval."""

    start_m: float
    end_m: float
    mode: SupportMode


Edit = (
    AddPoi
    | RemovePoi
    | EditPoi
    | EditInstruction
    | MovePathVertex
    | PromoteCandidate
    | SplitSubPath
    | MergeSubPaths
    | SetSubPathMode
)

# the support partition stays tunable after finalization; negotiated content
# (POIs, photos, instructions, geometry) does not
_PARTITION_EDITS = (SplitSubPath, MergeSubPaths, SetSubPathMode)


def _materialized_subpaths(route: RouteDefinition) -> tuple[SubPath, ...]:
    if route.subpaths:
        return route.subpaths
    return (SubPath(0.0, route.length_m, SupportMode.ACTIONABLE),)


def _edit_subpaths(route: RouteDefinition, edit: Edit) -> tuple[SubPath, ...]:
    spans = tuple(sorted(_materialized_subpaths(route), key=lambda s: s.start_m))
    if isinstance(edit, SplitSubPath):
        for i, sp in enumerate(spans):
            if sp.start_m < edit.at_m < sp.end_m:
                halves = (
                    SubPath(sp.start_m, edit.at_m, sp.mode),
                    SubPath(edit.at_m, sp.end_m, sp.mode),
                )
                return spans[:i] + halves + spans[i + 1 :]
        raise EditRejected(f"split point {edit.at_m} is not interior to any sub-path")
    if isinstance(edit, MergeSubPaths):
        for i in range(len(spans) - 1):
            if spans[i].end_m == edit.at_m:
                joined = SubPath(spans[i].start_m, spans[i + 1].end_m, spans[i].mode)
                return spans[:i] + (joined,) + spans[i + 2 :]
        raise NotFoundError(f"no sub-path boundary at {edit.at_m}")
    assert isinstance(edit, SetSubPathMode)
    for i, sp in enumerate(spans):
        if sp.start_m == edit.start_m and sp.end_m == edit.end_m:
            return spans[:i] + (SubPath(sp.start_m, sp.end_m, edit.mode),) + spans[i + 1 :]
    raise NotFoundError(f"no sub-path [{edit.start_m}, {edit.end_m})")


def _replace_poi(route: RouteDefinition, poi_id: str, new_poi: Poi) -> RouteDefinition:
    pois = tuple(new_poi if p.id == poi_id else p for p in route.pois)
    return replace(route, pois=pois)


def apply_edit(route: RouteDefinition, edit: Edit) -> RouteDefinition:
    """Apply one edit, bump the version, revalidate.

    The edit is atomic: if the result would not validate, nothing changes and
    the edit is rejected.

    Raises:
        StateError: route is already working.
        NotFoundError: edit references a POI or vertex that is not there.
        EditRejected: the result would be invalid.
    """
    if route.status is RouteStatus.WORKING and not isinstance(edit, _PARTITION_EDITS):
        raise StateError("working routes are not edited in place; derive a new draft")

    if isinstance(edit, AddPoi):
        if any(p.id == edit.poi.id for p in route.pois):
            raise EditRejected(f"duplicate POI id {edit.poi.id}")
        candidate = replace(route, pois=route.pois + (edit.poi,))
        candidate = order_pois(candidate)
    elif isinstance(edit, RemovePoi):
        route.poi_by_id(edit.poi_id)
        candidate = replace(
            route, pois=tuple(p for p in route.pois if p.id != edit.poi_id)
        )
    elif isinstance(edit, EditPoi):
        poi = route.poi_by_id(edit.poi_id)
        fields = {}
        if edit.radius_m is not None:
            fields["radius_m"] = edit.radius_m
        if edit.notes is not None:
            fields["notes"] = edit.notes
        if edit.photos is not None:
            fields["photos"] = tuple(edit.photos)
        if edit.symbol is not None:
            fields["symbol"] = edit.symbol
        if edit.audio is not None:
            fields["audio"] = edit.audio
        candidate = _replace_poi(route, edit.poi_id, replace(poi, **fields))
    elif isinstance(edit, EditInstruction):
        poi = route.poi_by_id(edit.poi_id)
        candidate = _replace_poi(route, edit.poi_id, replace(poi, instruction=edit.instruction))
    elif isinstance(edit, MovePathVertex):
        if not 0 <= edit.index < len(route.geometry.vertices):
            raise NotFoundError(f"no vertex {edit.index}")
        vertices = list(route.geometry.vertices)
        vertices[edit.index] = edit.point
        try:
            geometry = Polyline(vertices)
        except Exception as exc:
            raise EditRejected(f"geometry edit rejected: {exc}") from None
        candidate = order_pois(replace(route, geometry=geometry))
    elif isinstance(edit, PromoteCandidate):
        poi = route.poi_by_id(edit.poi_id)
        if edit.kind is PoiKind.CANDIDATE:
            raise EditRejected("promotion target must be landmark or reassurance")
        candidate = _replace_poi(route, edit.poi_id, replace(poi, kind=edit.kind))
    elif isinstance(edit, _PARTITION_EDITS):
        candidate = replace(route, subpaths=_edit_subpaths(route, edit))
    else:
        raise ContractViolation(f"unknown edit type: {type(edit).__name__}")

    candidate = replace(candidate, version=route.version + 1)
    report = validate_route(candidate)
    if not report.ok:
        codes = ", ".join(report.codes())
        raise EditRejected(f"edit would invalidate the route: {codes}")
    return candidate


def edit_from_dict(d: dict) -> Edit:
    """Parse one edit from its JSON form (used by the API and edit scripts)."""
    op = d.get("op")
    if op == "add_poi":
        return AddPoi(Poi.from_dict(d["poi"]))
    if op == "remove_poi":
        return RemovePoi(d["poi_id"])
    if op == "edit_poi":
        return EditPoi(
            poi_id=d["poi_id"],
            radius_m=d.get("radius_m"),
            notes=d.get("notes"),
            photos=tuple(d["photos"]) if "photos" in d else None,
            symbol=d.get("symbol"),
            audio=d.get("audio"),
        )
    if op == "edit_instruction":
        return EditInstruction(d["poi_id"], d["instruction"])
    if op == "move_vertex":
        return MovePathVertex(d["index"], GeoPoint(d["lat"], d["lon"]))
    if op == "promote":
        return PromoteCandidate(d["poi_id"], PoiKind(d["kind"]))
    if op == "split_subpath":
        return SplitSubPath(d["at_m"])
    if op == "merge_subpaths":
        return MergeSubPaths(d["at_m"])
    if op == "set_subpath_mode":
        return SetSubPathMode(d["start_m"], d["end_m"], SupportMode(d["mode"]))
    raise ContractViolation(f"unknown edit op: {op!r}")


# ------------------------------------------------------------- negotiation

class NegotiationAction(str, Enum):
    NEXT = "Next"
    PREV = "Prev"
    CONFIRM = "Confirm"
    REJECT = "Reject"
    SELECT_PHOTO = "SelectPhoto"
    APPROVE_INSTRUCTION = "ApproveInstruction"
    FLAG_PHOTO = "FlagPhoto"
    ANNOTATE = "Annotate"


@dataclass(frozen=True)
class PoiNegotiation:
    poi_id: str
    decided: PoiStatus | None = None
    selected_photo: str | None = None
    instruction_approved: bool = False
    flagged_photos: tuple[str, ...] = ()
    annotations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "poi_id": self.poi_id,
            "decided": self.decided.value if self.decided else None,
            "selected_photo": self.selected_photo,
            "instruction_approved": self.instruction_approved,
            "flagged_photos": list(self.flagged_photos),
            "annotations": list(self.annotations),
        }

    @staticmethod
    def from_dict(d: dict) -> "PoiNegotiation":
        return PoiNegotiation(
            poi_id=d["poi_id"],
            decided=PoiStatus(d["decided"]) if d.get("decided") else None,
            selected_photo=d.get("selected_photo"),
            instruction_approved=bool(d.get("instruction_approved", False)),
            flagged_photos=tuple(d.get("flagged_photos", ())),
            annotations=tuple(d.get("annotations", ())),
        )


@dataclass(frozen=True)
class FeedbackRecord:
    """One transcript line: who looked at what and what they said."""

    ts_ms: int
    neg_id: str
    poi_id: str | None
    action: str
    detail: dict

    def to_dict(self) -> dict:
        return {
            "ts_ms": self.ts_ms,
            "neg_id": self.neg_id,
            "poi_id": self.poi_id,
            "action": self.action,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class NegotiationSession:
    """Slideshow over the route's POIs, one per screen, photo first."""

    id: str
    route: RouteDefinition
    cursor: int = 0
    records: tuple[PoiNegotiation, ...] = ()

    @property
    def current(self) -> PoiNegotiation:
        return self.records[self.cursor]

    def record_for(self, poi_id: str) -> PoiNegotiation:
        for r in self.records:
            if r.poi_id == poi_id:
                return r
        raise NotFoundError(f"no negotiation record for {poi_id}")

    def all_decided(self) -> bool:
        return all(r.decided is not None for r in self.records)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "route": self.route.to_dict(),
            "cursor": self.cursor,
            "records": [r.to_dict() for r in self.records],
        }

    @staticmethod
    def from_dict(d: dict) -> "NegotiationSession":
        return NegotiationSession(
            id=d["id"],
            route=RouteDefinition.from_dict(d["route"]),
            cursor=d["cursor"],
            records=tuple(PoiNegotiation.from_dict(r) for r in d["records"]),
        )


def start_negotiation(
    route: RouteDefinition, neg_id: str | None = None
) -> tuple[RouteDefinition, NegotiationSession]:
    """Open a negotiation; the route moves to under-negotiation.

    Raises:
        StateError: route not in draft.
        ValidationFailed: the draft does not validate.
        ContractViolation: nothing to negotiate (no POIs).
    """
    if route.status is not RouteStatus.DRAFT:
        raise StateError(f"negotiation starts from a draft, not {route.status.value}")
    report = validate_route(route)
    if not report.ok:
        raise ValidationFailed(report)
    if not route.pois:
        raise ContractViolation("a route without POIs cannot be negotiated")
    under = replace(route, status=RouteStatus.UNDER_NEGOTIATION, version=route.version + 1)
    if neg_id is None:
        neg_id = f"neg-{route.id}-v{under.version}"
    session = NegotiationSession(
        id=neg_id,
        route=under,
        cursor=0,
        records=tuple(PoiNegotiation(poi_id=p.id) for p in under.pois),
    )
    return under, session


def _update_record(
    neg: NegotiationSession, index: int, record: PoiNegotiation
) -> NegotiationSession:
    records = list(neg.records)
    records[index] = record
    return replace(neg, records=tuple(records))


def negotiation_step(
    neg: NegotiationSession,
    action: NegotiationAction | str,
    ts_ms: int,
    detail: str | None = None,
) -> tuple[NegotiationSession, FeedbackRecord]:
    """Apply one slideshow action and produce its transcript line.

    Next/Prev clamp at the ends rather than erroring, so a replayed transcript
    is always safe. Confirm requires a selected primary photo, and for
    landmarks an approved instruction too.
    """
    action = NegotiationAction(action)
    poi = neg.route.pois[neg.cursor]
    record = neg.current

    if action is NegotiationAction.NEXT:
        new_cursor = min(neg.cursor + 1, len(neg.records) - 1)
        out = replace(neg, cursor=new_cursor)
        fb_poi = out.route.pois[new_cursor].id
        return out, FeedbackRecord(ts_ms, neg.id, fb_poi, action.value, {})
    if action is NegotiationAction.PREV:
        new_cursor = max(neg.cursor - 1, 0)
        out = replace(neg, cursor=new_cursor)
        fb_poi = out.route.pois[new_cursor].id
        return out, FeedbackRecord(ts_ms, neg.id, fb_poi, action.value, {})

    if action is NegotiationAction.SELECT_PHOTO:
        if detail is None or detail not in poi.photos:
            raise NotFoundError(f"photo {detail!r} is not attached to {poi.id}")
        out = _update_record(neg, neg.cursor, replace(record, selected_photo=detail))
        return out, FeedbackRecord(ts_ms, neg.id, poi.id, action.value, {"photo": detail})

    if action is NegotiationAction.APPROVE_INSTRUCTION:
        if not poi.instruction.strip():
            raise ContractViolation(f"{poi.id} has no instruction to approve")
        out = _update_record(neg, neg.cursor, replace(record, instruction_approved=True))
        return out, FeedbackRecord(ts_ms, neg.id, poi.id, action.value, {})

    if action is NegotiationAction.FLAG_PHOTO:
        if detail is None or detail not in poi.photos:
            raise NotFoundError(f"photo {detail!r} is not attached to {poi.id}")
        flagged = record.flagged_photos
        if detail not in flagged:
            flagged = flagged + (detail,)
        out = _update_record(neg, neg.cursor, replace(record, flagged_photos=flagged))
        return out, FeedbackRecord(ts_ms, neg.id, poi.id, action.value, {"photo": detail})

    if action is NegotiationAction.ANNOTATE:
        text = detail or ""
        out = _update_record(
            neg, neg.cursor, replace(record, annotations=record.annotations + (text,))
        )
        return out, FeedbackRecord(ts_ms, neg.id, poi.id, action.value, {"text": text})

    if action is NegotiationAction.CONFIRM:
        if record.selected_photo is None:
            raise ContractViolation(f"confirming {poi.id} requires a selected primary photo")
        if poi.kind is PoiKind.LANDMARK and not record.instruction_approved:
            raise ContractViolation(f"confirming landmark {poi.id} requires an approved instruction")
        out = _update_record(neg, neg.cursor, replace(record, decided=PoiStatus.CONFIRMED))
        return out, FeedbackRecord(
            ts_ms, neg.id, poi.id, action.value, {"photo": record.selected_photo}
        )

    if action is NegotiationAction.REJECT:
        out = _update_record(neg, neg.cursor, replace(record, decided=PoiStatus.REJECTED))
        return out, FeedbackRecord(ts_ms, neg.id, poi.id, action.value, {"reason": detail or ""})

    raise ContractViolation(f"unhandled action {action}")


@dataclass(frozen=True)
class PreviewCard:
    """What the trainee will see for a POI, shown ahead of time."""

    poi_id: str
    payload: dict
    preview_only: bool

    def payload_bytes(self) -> str:
        return canonical_dumps(self.payload)


def preview_poi(route: RouteDefinition, poi_id: str) -> PreviewCard:
    """Preview a POI exactly as training will deliver it.

    The payload comes from the same builder the live engine uses, so the two
    are byte-identical. Cards for undecided POIs are marked preview-only.
    """
    poi = route.poi_by_id(poi_id)
    return PreviewCard(
        poi_id=poi_id,
        payload=instruction_payload(route, poi),
        preview_only=poi.status is not PoiStatus.CONFIRMED,
    )


def finalize_route(neg: NegotiationSession) -> RouteDefinition:
    """Turn a fully decided negotiation into a working route.

    Rejected POIs disappear; confirmed ones get their selected photo moved to
    the front. Missing sub-path coverage becomes a single actionable span.

    Raises:
        IncompleteNegotiation: undecided POIs, or no confirmed landmark.
    """
    if not neg.all_decided():
        undecided = [r.poi_id for r in neg.records if r.decided is None]
        raise IncompleteNegotiation(f"undecided POIs: {', '.join(undecided)}")

    kept: list[Poi] = []
    for poi, record in zip(neg.route.pois, neg.records):
        if record.decided is PoiStatus.REJECTED:
            continue
        photos = poi.photos
        if record.selected_photo is not None and record.selected_photo in photos:
            photos = (record.selected_photo,) + tuple(
                p for p in photos if p != record.selected_photo
            )
        kept.append(replace(poi, status=PoiStatus.CONFIRMED, photos=photos))

    if not any(p.kind is PoiKind.LANDMARK for p in kept):
        raise IncompleteNegotiation("no decision points: confirm at least one landmark")

    subpaths = neg.route.subpaths
    if not subpaths:
        subpaths = (SubPath(0.0, neg.route.length_m, SupportMode.ACTIONABLE),)

    working = replace(
        neg.route,
        pois=tuple(kept),
        subpaths=subpaths,
        status=RouteStatus.WORKING,
        version=neg.route.version + 1,
    )
    report = validate_route(working)
    if not report.ok:
        raise ValidationFailed(report)
    return working


def reopen_route(route: RouteDefinition, new_route_id: str | None = None) -> RouteDefinition:
    """Derive a fresh draft from a working route for re-negotiation."""
    if route.status is not RouteStatus.WORKING:
        raise StateError("only working routes are reopened")
    return replace(
        route,
        id=new_route_id if new_route_id is not None else route.id,
        status=RouteStatus.DRAFT,
        version=route.version + 1,
    )
