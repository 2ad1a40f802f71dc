"""Data classification, sync gating, and per-session consent.

Every artifact the system produces belongs to exactly one tier. Video never
leaves the recording device; raw walk captures move only device-to-device;
only curated material may reach the server. The gate is the single choke
point every sync path must pass through.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .canonical import canonical_dumps, sha256_hex
from .errors import ClassificationError, ConsentError, SyncPolicyError


class DataClass(str, Enum):
    LOCAL_ONLY = "LOCAL_ONLY"
    PEER_TRANSFERABLE = "PEER"
    CLOUD_SYNCABLE = "CLOUD"


class ItemKind(str, Enum):
    VIDEO_ASSET = "video_asset"
    RAW_ERW_SESSION = "raw_erw_session"
    POI_PHOTO = "poi_photo"
    WORKING_ROUTE = "working_route"
    SESSION_RECORD = "session_record"
    NEGOTIATION_TRANSCRIPT = "negotiation_transcript"


class SyncDestination(str, Enum):
    PEER = "peer"
    CLOUD = "cloud"


def classify(kind: ItemKind | str, curated: bool = False) -> DataClass:
    """Tier for a given kind of item.

    Args:
        kind: what the item is.
        curated: for photos only; a photo picked during negotiation is curated,
            everything else captured on a walk is not.

    Raises:
        ClassificationError: unknown kind. Unknown data is never synced.
    """
    try:
        kind = ItemKind(kind)
    except ValueError:
        raise ClassificationError(f"unknown item kind: {kind!r}") from None
    if kind is ItemKind.VIDEO_ASSET:
        return DataClass.LOCAL_ONLY
    if kind is ItemKind.RAW_ERW_SESSION:
        return DataClass.PEER_TRANSFERABLE
    if kind is ItemKind.POI_PHOTO:
        return DataClass.CLOUD_SYNCABLE if curated else DataClass.PEER_TRANSFERABLE
    return DataClass.CLOUD_SYNCABLE


@dataclass(frozen=True)
class ManifestItem:
    item_id: str
    data_class: DataClass
    sha256: str

    def to_dict(self) -> dict:
        return {"id": self.item_id, "class": self.data_class.value, "sha256": self.sha256}


@dataclass(frozen=True)
class GateReport:
    """Outcome of a lenient gate pass: what may go, what was stripped."""

    permitted: tuple[ManifestItem, ...]
    stripped: tuple[ManifestItem, ...]


def gate_sync(
    items: list[ManifestItem] | tuple[ManifestItem, ...],
    destination: SyncDestination,
    strict: bool = True,
) -> GateReport:
    """Decide what from a manifest may travel to a destination.

    Cloud accepts only CLOUD_SYNCABLE items. In strict mode (the default) one
    offending item rejects the whole manifest; in lenient mode offenders are
    stripped and reported. Peer transfers accept everything that has a known
    class.

    Raises:
        SyncPolicyError: strict cloud gate with offending items present.
        ClassificationError: an item whose class is not a known tier.
    """
    for item in items:
        if not isinstance(item.data_class, DataClass):
            raise ClassificationError(f"item {item.item_id} has unknown class")
    destination = SyncDestination(destination)
    if destination is SyncDestination.PEER:
        return GateReport(tuple(items), ())
    offending = tuple(i for i in items if i.data_class is not DataClass.CLOUD_SYNCABLE)
    if offending and strict:
        names = ", ".join(i.item_id for i in offending)
        raise SyncPolicyError(
            f"manifest rejected: not cloud-syncable: {names}",
            offending=tuple(i.item_id for i in offending),
        )
    permitted = tuple(i for i in items if i.data_class is DataClass.CLOUD_SYNCABLE)
    return GateReport(permitted, offending)


class ConsentScope(str, Enum):
    TRAINING_TELEMETRY = "training-telemetry"
    ERW_RECORDING = "erw-recording"


@dataclass(frozen=True)
class ConsentRecord:
    """A single-use grant, created after the disclosure was shown."""

    id: str
    user_id: str
    scope: ConsentScope
    granted_ts: int
    disclosure: str

    def __post_init__(self) -> None:
        if not self.disclosure or not self.disclosure.strip():
            raise ConsentError("a consent record requires a non-empty disclosure")

    @property
    def disclosure_sha256(self) -> str:
        return sha256_hex(self.disclosure.encode("utf-8"))


class ConsentLedger:
    """Grants and spends consent records; append-only file when given a path.

    Spending is an atomic check-and-mark: a record backs at most one session,
    ever.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: dict[str, ConsentRecord] = {}
        self._spent: dict[str, str] = {}
        if self._path is not None and self._path.exists():
            self._replay()

    def _replay(self) -> None:
        import json

        for line in self._path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            rid = row["consent_id"]
            if row["session_id"] is not None:
                self._spent[rid] = row["session_id"]

    def _append(self, record: ConsentRecord, session_id: str | None) -> None:
        if self._path is None:
            return
        self._path.parent.mkdir(parents=True, exist_ok=True)
        row = {
            "consent_id": record.id,
            "user_id": record.user_id,
            "scope": record.scope.value,
            "granted_ts_ms": record.granted_ts,
            "session_id": session_id,
            "disclosure_sha256": record.disclosure_sha256,
        }
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(canonical_dumps(row) + "\n")

    def grant(
        self,
        user_id: str,
        scope: ConsentScope | str,
        disclosure: str,
        granted_ts: int,
        consent_id: str | None = None,
    ) -> ConsentRecord:
        """Record a grant. The disclosure text is mandatory, not a formality.

        Raises:
            ConsentError: empty disclosure.
        """
        if not disclosure or not disclosure.strip():
            raise ConsentError("a consent grant requires a non-empty disclosure")
        scope = ConsentScope(scope)
        if consent_id is None:
            consent_id = f"consent-{user_id}-{granted_ts}"
        record = ConsentRecord(consent_id, user_id, scope, granted_ts, disclosure)
        with self._lock:
            if record.id in self._records:
                raise ConsentError(f"consent id already granted: {record.id}")
            self._records[record.id] = record
            self._append(record, None)
        return record

    def get(self, consent_id: str) -> ConsentRecord:
        try:
            return self._records[consent_id]
        except KeyError:
            raise ConsentError(f"no such consent record: {consent_id}") from None

    def is_spent(self, consent_id: str) -> bool:
        return consent_id in self._spent

    def spend(self, record: ConsentRecord, session_id: str) -> None:
        """Bind the record to a session, exactly once.

        Raises:
            ConsentError: already spent.
        """
        with self._lock:
            if record.id in self._spent:
                raise ConsentError(
                    f"consent {record.id} already spent on session {self._spent[record.id]}"
                )
            self._spent[record.id] = session_id
            self._records.setdefault(record.id, record)
            self._append(record, session_id)
