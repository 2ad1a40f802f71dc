"""File-backed persistence: a directory per entity kind, canonical JSON inside.

Desk scale by design. Every artifact is a diff-able file, the only index is a
tiny JSON map per route, and nothing reaches the cloud area except through the
strict sync gate. Writes go through a temp file and rename, so a reader never
sees a half-written entity.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Mapping, Sequence

from .canonical import canonical_dumps
from .design import NegotiationSession
from .engine import SessionRecord
from .errors import ConflictError, IntegrityError, NotFoundError
from .erw import ErwSession
from .model import RouteDefinition, Way
from .privacy import (
    ConsentLedger,
    GateReport,
    ManifestItem,
    SyncDestination,
    gate_sync,
)


class Store:
    """Entity repositories rooted in one directory.

    Layout:
        ways/{way_id}.json
        routes/{route_id}/v{n}.json + index.json
        erw/{session_id}.json
        negotiations/{neg_id}.json
        sessions/{session_id}.json          (immutable session records)
        feed/{session_id}.ndjson            (feed envelopes, append-only)
        transcripts/{neg_id}.ndjson         (negotiation feedback, append-only)
        consents/ledger.ndjson
        cloud/                              (strict-gated uploads only)
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._route_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._ledger: ConsentLedger | None = None

    # ------------------------------------------------------------- plumbing

    def _read_json(self, path: Path, what: str) -> dict:
        if not path.exists():
            raise NotFoundError(f"no such {what}: {path.stem}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise IntegrityError(f"corrupt {what} file {path.name}: {exc}") from None

    def _write_json(self, path: Path, payload: dict) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(canonical_dumps(payload) + "\n", encoding="utf-8")
        tmp.replace(path)

    def _append_ndjson(self, path: Path, rows: Sequence[dict]) -> None:
        if not rows:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(canonical_dumps(row) + "\n")

    def _read_ndjson(self, path: Path, what: str) -> list[dict]:
        if not path.exists():
            raise NotFoundError(f"no such {what}: {path.stem}")
        rows = []
        for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise IntegrityError(
                    f"corrupt {what} file {path.name} at line {i + 1}: {exc}"
                ) from None
        return rows

    # ----------------------------------------------------------------- ways

    def save_way(self, way: Way) -> None:
        self._write_json(self.root / "ways" / f"{way.id}.json", way.to_dict())

    def load_way(self, way_id: str) -> Way:
        return Way.from_dict(self._read_json(self.root / "ways" / f"{way_id}.json", "way"))

    def list_ways(self) -> list[str]:
        d = self.root / "ways"
        return sorted(p.stem for p in d.glob("*.json")) if d.exists() else []

    # --------------------------------------------------------------- routes

    def _route_lock(self, route_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._route_locks.setdefault(route_id, threading.Lock())

    def save_route(self, route: RouteDefinition) -> None:
        """Append one version to the route's chain.

        The first write establishes the chain; every later write must carry
        exactly the next version number, so two writers building on the same
        base cannot both land.

        Raises:
            ConflictError: version is not the stored latest plus one.
        """
        with self._route_lock(route.id):
            d = self.root / "routes" / route.id
            index = d / "index.json"
            if index.exists():
                latest = self._read_json(index, "route index")["latest"]
                if route.version != latest + 1:
                    raise ConflictError(
                        f"route {route.id}: write of v{route.version} "
                        f"conflicts with stored v{latest}"
                    )
            self._write_json(d / f"v{route.version}.json", route.to_dict())
            self._write_json(index, {"latest": route.version})

    def load_route(self, route_id: str, version: int | None = None) -> RouteDefinition:
        d = self.root / "routes" / route_id
        if version is None:
            version = self._read_json(d / "index.json", "route")["latest"]
        return RouteDefinition.from_dict(
            self._read_json(d / f"v{version}.json", "route version")
        )

    def route_versions(self, route_id: str) -> list[int]:
        d = self.root / "routes" / route_id
        if not d.exists():
            raise NotFoundError(f"no such route: {route_id}")
        return sorted(int(p.stem[1:]) for p in d.glob("v*.json"))

    def list_routes(self) -> list[str]:
        d = self.root / "routes"
        return sorted(p.name for p in d.iterdir() if p.is_dir()) if d.exists() else []

    # ------------------------------------------------------------------ erw

    def save_erw(self, session: ErwSession) -> None:
        self._write_json(self.root / "erw" / f"{session.id}.json", session.to_dict())

    def load_erw(self, session_id: str) -> ErwSession:
        return ErwSession.from_dict(
            self._read_json(self.root / "erw" / f"{session_id}.json", "erw session")
        )

    # ----------------------------------------------------------- negotiation

    def save_negotiation(self, neg: NegotiationSession) -> None:
        self._write_json(self.root / "negotiations" / f"{neg.id}.json", neg.to_dict())

    def load_negotiation(self, neg_id: str) -> NegotiationSession:
        return NegotiationSession.from_dict(
            self._read_json(self.root / "negotiations" / f"{neg_id}.json", "negotiation")
        )

    def append_transcript(self, neg_id: str, rows: Sequence[dict]) -> None:
        self._append_ndjson(self.root / "transcripts" / f"{neg_id}.ndjson", rows)

    def load_transcript(self, neg_id: str) -> list[dict]:
        return self._read_ndjson(
            self.root / "transcripts" / f"{neg_id}.ndjson", "transcript"
        )

    # ------------------------------------------------------- session records

    def save_session_record(self, record: SessionRecord) -> None:
        self._write_json(
            self.root / "sessions" / f"{record.session_id}.json", record.to_dict()
        )

    def load_session_record(self, session_id: str) -> SessionRecord:
        return SessionRecord.from_dict(
            self._read_json(self.root / "sessions" / f"{session_id}.json", "session record")
        )

    def list_session_records(self, way_id: str | None = None) -> list[SessionRecord]:
        d = self.root / "sessions"
        if not d.exists():
            return []
        records = [self.load_session_record(p.stem) for p in sorted(d.glob("*.json"))]
        if way_id is not None:
            records = [r for r in records if r.way_id == way_id]
        return records

    # ----------------------------------------------------------------- feed

    def append_feed(self, session_id: str, envelopes: Sequence[dict]) -> None:
        self._append_ndjson(self.root / "feed" / f"{session_id}.ndjson", envelopes)

    def load_feed(self, session_id: str) -> list[dict]:
        return self._read_ndjson(self.root / "feed" / f"{session_id}.ndjson", "feed")

    # -------------------------------------------------------------- consent

    @property
    def consents(self) -> ConsentLedger:
        if self._ledger is None:
            self._ledger = ConsentLedger(self.root / "consents" / "ledger.ndjson")
        return self._ledger

    # ---------------------------------------------------------------- cloud

    @property
    def cloud_dir(self) -> Path:
        return self.root / "cloud"

    def sync_to_cloud(
        self, items: Sequence[ManifestItem], payloads: Mapping[str, bytes]
    ) -> GateReport:
        """The only write path into cloud/; the strict gate guards it.

        Nothing lands unless the whole manifest passes, so a single local-only
        or peer-tier item keeps every byte out of the cloud area.

        Raises:
            SyncPolicyError: manifest contains an item below cloud tier.
            NotFoundError: a permitted item has no payload bytes.
        """
        report = gate_sync(tuple(items), SyncDestination.CLOUD, strict=True)
        staged: list[tuple[Path, bytes]] = []
        for item in report.permitted:
            if item.item_id not in payloads:
                raise NotFoundError(f"no payload bytes for {item.item_id}")
            staged.append((self.cloud_dir / item.item_id, payloads[item.item_id]))
        for path, data in staged:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        return report
