"""Exploratory walk capture and device-to-device transfer packages.

A capture session collects GPS fixes, candidate POIs with their photos, and
optionally a video reference. Finishing it freezes the data and reduces the
trace. Moving a raw capture to another device goes through a hashed package;
the cloud is not a legal destination for it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .canonical import canonical_bytes, canonical_dumps, sha256_hex
from .config import SIMPLIFY_TOLERANCE_M
from .errors import (
    ClassificationError,
    ContractViolation,
    InsufficientData,
    IntegrityError,
    NotFoundError,
    OrderingError,
    StateError,
)
from .geo import GpsFix, GeoPoint, Polyline, fixes_from_csv_text, fixes_to_csv_text, simplify_trace
from .model import Poi, PoiKind, PoiStatus
from .privacy import DataClass


class ErwState(str, Enum):
    RECORDING = "recording"
    FINISHED = "finished"


class TransferDestination(str, Enum):
    TRAINER_DEVICE = "trainer_device"
    CLOUD = "cloud"


@dataclass(frozen=True)
class MediaAsset:
    """Raw bytes of a photo or video, addressed by id."""

    id: str
    data: bytes
    media_type: str = "image/jpeg"

    @property
    def sha256(self) -> str:
        return sha256_hex(self.data)


@dataclass(frozen=True)
class ErwSession:
    """An exploratory walk. Operations return updated copies; a finished
    session never changes again."""

    id: str
    way_id: str
    started_ts: int
    state: ErwState = ErwState.RECORDING
    fixes: tuple[GpsFix, ...] = ()
    candidate_pois: tuple[Poi, ...] = ()
    capture_roles: tuple[tuple[str, str], ...] = ()  # (poi_id, role), recorded only
    video_ref: str | None = None
    ended_ts: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "way_id": self.way_id,
            "started_ts": self.started_ts,
            "state": self.state.value,
            "fixes": [
                {
                    "ts_ms": f.ts,
                    "lat": f.point.lat,
                    "lon": f.point.lon,
                    "accuracy_m": f.accuracy,
                }
                for f in self.fixes
            ],
            "candidate_pois": [p.to_dict() for p in self.candidate_pois],
            "capture_roles": [list(pair) for pair in self.capture_roles],
            "video_ref": self.video_ref,
            "ended_ts": self.ended_ts,
        }

    @staticmethod
    def from_dict(d: dict) -> "ErwSession":
        return ErwSession(
            id=d["id"],
            way_id=d["way_id"],
            started_ts=d["started_ts"],
            state=ErwState(d["state"]),
            fixes=tuple(
                GpsFix(GeoPoint(f["lat"], f["lon"]), f["ts_ms"], f.get("accuracy_m"))
                for f in d["fixes"]
            ),
            candidate_pois=tuple(Poi.from_dict(p) for p in d["candidate_pois"]),
            capture_roles=tuple((a, b) for a, b in d.get("capture_roles", [])),
            video_ref=d.get("video_ref"),
            ended_ts=d.get("ended_ts"),
        )


def start_session(
    session_id: str, way_id: str, started_ts: int, video_ref: str | None = None
) -> ErwSession:
    return ErwSession(id=session_id, way_id=way_id, started_ts=started_ts, video_ref=video_ref)


def _require_recording(session: ErwSession) -> None:
    if session.state is not ErwState.RECORDING:
        raise StateError("session is finished and immutable")


def append_fix(session: ErwSession, fix: GpsFix) -> ErwSession:
    """Add one fix; timestamps must be strictly increasing."""
    _require_recording(session)
    if fix.ts < session.started_ts:
        raise OrderingError("fix predates the session start")
    if session.fixes and fix.ts <= session.fixes[-1].ts:
        raise OrderingError(f"fix ts {fix.ts} not after {session.fixes[-1].ts}")
    return replace(session, fixes=session.fixes + (fix,))


def capture_poi(
    session: ErwSession,
    at: GpsFix,
    photos: Sequence[str],
    note: str = "",
    captured_by: str = "trainer",
    poi_id: str | None = None,
) -> ErwSession:
    """Capture a candidate POI at a fix.

    Every capture needs at least one photo; candidates start pending and
    unclassified (their final kind is decided during curation).
    """
    _require_recording(session)
    if not photos:
        raise ContractViolation("photo-required: a POI capture needs at least one photo")
    if at.ts < session.started_ts:
        raise OrderingError("capture predates the session start")
    if poi_id is None:
        poi_id = f"{session.id}-poi{len(session.candidate_pois) + 1}"
    poi = Poi(
        id=poi_id,
        coordinate=at.point,
        captured_ts=at.ts,
        kind=PoiKind.CANDIDATE,
        photos=tuple(photos),
        notes=note,
        status=PoiStatus.PENDING,
    )
    return replace(
        session,
        candidate_pois=session.candidate_pois + (poi,),
        capture_roles=session.capture_roles + ((poi_id, captured_by),),
    )


def finish_session(
    session: ErwSession, tolerance_m: float = SIMPLIFY_TOLERANCE_M
) -> tuple[ErwSession, Polyline]:
    """Freeze the session and return it with the reduced trace."""
    _require_recording(session)
    if len(session.fixes) < 2:
        raise InsufficientData("cannot finish a walk with fewer than 2 fixes")
    path = simplify_trace(session.fixes, tolerance_m)
    ended = session.fixes[-1].ts
    for poi in session.candidate_pois:
        ended = max(ended, poi.captured_ts)
    finished = replace(session, state=ErwState.FINISHED, ended_ts=ended)
    return finished, path


@dataclass(frozen=True)
class PackageItem:
    item_id: str
    data_class: DataClass
    sha256: str
    path: str


@dataclass(frozen=True)
class TransferPackage:
    """A manifest plus payload bytes, ready to be written to a directory."""

    items: tuple[PackageItem, ...]
    payloads: tuple[tuple[str, bytes], ...]  # (relative path, bytes)

    def payload(self, path: str) -> bytes:
        for p, data in self.payloads:
            if p == path:
                return data
        raise NotFoundError(f"no payload at {path}")


def build_transfer_package(
    session: ErwSession,
    destination: TransferDestination | str,
    assets: Mapping[str, MediaAsset],
) -> TransferPackage:
    """Assemble everything a trainer device needs to curate the walk.

    Video stays local-only in classification terms but does travel on the
    direct device link, which is the one place it may go. The cloud is not an
    acceptable destination for any part of a raw capture.

    Raises:
        ClassificationError: cloud destination.
        StateError: session still recording.
        NotFoundError: a referenced photo or video asset has no bytes.
    """
    destination = TransferDestination(destination)
    if destination is TransferDestination.CLOUD:
        raise ClassificationError("raw-erw-is-not-cloud-syncable")
    if session.state is not ErwState.FINISHED:
        raise StateError("only finished sessions can be packaged")

    items: list[PackageItem] = []
    payloads: list[tuple[str, bytes]] = []

    session_bytes = canonical_bytes(session.to_dict())
    items.append(
        PackageItem(
            item_id=f"{session.id}-session",
            data_class=DataClass.PEER_TRANSFERABLE,
            sha256=sha256_hex(session_bytes),
            path="session.json",
        )
    )
    payloads.append(("session.json", session_bytes))

    trace_bytes = fixes_to_csv_text(session.fixes).encode("utf-8")
    items.append(
        PackageItem(
            item_id=f"{session.id}-trace",
            data_class=DataClass.PEER_TRANSFERABLE,
            sha256=sha256_hex(trace_bytes),
            path="trace.csv",
        )
    )
    payloads.append(("trace.csv", trace_bytes))

    seen: set[str] = set()
    for poi in session.candidate_pois:
        for asset_id in poi.photos:
            if asset_id in seen:
                continue
            seen.add(asset_id)
            if asset_id not in assets:
                raise NotFoundError(f"no bytes for photo asset {asset_id}")
            asset = assets[asset_id]
            rel = f"photos/{asset_id}"
            items.append(
                PackageItem(
                    item_id=asset_id,
                    data_class=DataClass.PEER_TRANSFERABLE,
                    sha256=asset.sha256,
                    path=rel,
                )
            )
            payloads.append((rel, asset.data))

    if session.video_ref is not None:
        if session.video_ref not in assets:
            raise NotFoundError(f"no bytes for video asset {session.video_ref}")
        video = assets[session.video_ref]
        rel = f"video/{session.video_ref}"
        items.append(
            PackageItem(
                item_id=session.video_ref,
                data_class=DataClass.LOCAL_ONLY,
                sha256=video.sha256,
                path=rel,
            )
        )
        payloads.append((rel, video.data))

    return TransferPackage(items=tuple(items), payloads=tuple(payloads))


def write_package(package: TransferPackage, directory: str | Path) -> Path:
    """Materialize a package: manifest.json plus payload files."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "items": [
            {
                "id": item.item_id,
                "class": item.data_class.value,
                "sha256": item.sha256,
                "path": item.path,
            }
            for item in package.items
        ]
    }
    (root / "manifest.json").write_text(canonical_dumps(manifest) + "\n", encoding="utf-8")
    for rel, data in package.payloads:
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    return root


def read_package(directory: str | Path) -> TransferPackage:
    """Load a package directory, verifying every payload hash.

    Raises:
        IntegrityError: missing payload or hash mismatch.
    """
    import json

    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise IntegrityError("package has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt manifest: {exc}") from None

    items: list[PackageItem] = []
    payloads: list[tuple[str, bytes]] = []
    for row in manifest["items"]:
        target = root / row["path"]
        if not target.exists():
            raise IntegrityError(f"missing payload: {row['path']}")
        data = target.read_bytes()
        if sha256_hex(data) != row["sha256"]:
            raise IntegrityError(f"hash mismatch for {row['id']}")
        items.append(
            PackageItem(
                item_id=row["id"],
                data_class=DataClass(row["class"]),
                sha256=row["sha256"],
                path=row["path"],
            )
        )
        payloads.append((row["path"], data))
    return TransferPackage(items=tuple(items), payloads=tuple(payloads))


def session_from_package(package: TransferPackage) -> ErwSession:
    """Reconstruct the capture session carried by a package."""
    import json

    return ErwSession.from_dict(json.loads(package.payload("session.json").decode("utf-8")))


def trace_from_package(package: TransferPackage) -> list[GpsFix]:
    return fixes_from_csv_text(package.payload("trace.csv").decode("utf-8"))
