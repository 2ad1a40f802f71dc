"""Application service: live training sessions, the monitoring feed, and the
workflows that tie capture, curation, negotiation, and training to the store.

The engine stays single-writer: every operation on a live session runs under
that session's lock, so fixes are applied in arrival order no matter how many
connections the server juggles. Feed fan-out happens inside the same critical
section but only copies references into subscriber queues, so it never blocks
on a slow consumer.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .canonical import canonical_dumps
from .config import AppConfig
from .design import (
    NegotiationSession,
    PreviewCard,
    apply_edit,
    edit_from_dict,
    finalize_route,
    negotiation_step,
    preview_poi,
    start_negotiation,
)
from .engine import (
    SessionRecord,
    TrainingConfig,
    TrainingEvent,
    TrainingSession,
    begin_session,
)
from .errors import (
    FeedUnavailableError,
    InsufficientData,
    NotFoundError,
    StateError,
)
from .erw import (
    ErwSession,
    MediaAsset,
    TransferPackage,
    append_fix,
    build_transfer_package,
    capture_poi,
    finish_session,
    start_session,
    write_package,
)
from .geo import GpsFix, Polyline
from .model import RouteDefinition, RouteStatus
from .indicators import indicator_report, learning_trend
from .store import Store


@dataclass(frozen=True)
class FeedEvent:
    """One monitoring envelope: the event plus where the walker was."""

    session_id: str
    seq: int
    event: TrainingEvent
    position: dict | None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "seq": self.seq,
            "event": self.event.to_dict(),
            "position": self.position,
        }

    def ndjson_line(self) -> str:
        return canonical_dumps(self.to_dict()) + "\n"

    @staticmethod
    def from_dict(d: dict) -> "FeedEvent":
        return FeedEvent(
            session_id=d["session_id"],
            seq=d["seq"],
            event=TrainingEvent.from_dict(d["event"]),
            position=d["position"],
        )


def draft_from_walk(
    session: ErwSession, path: Polyline, route_id: str | None = None
) -> RouteDefinition:
    """First draft for curation: the reduced geometry plus raw candidates."""
    return RouteDefinition(
        id=route_id or f"route-{session.id}",
        way_id=session.way_id,
        geometry=path,
        pois=session.candidate_pois,
        subpaths=(),
        status=RouteStatus.DRAFT,
        version=1,
    )


@dataclass
class _Live:
    session: TrainingSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    subscribers: list[queue.SimpleQueue] = field(default_factory=list)
    published: int = 0


class TrainingService:
    def __init__(self, store: Store, config: AppConfig | None = None):
        self.store = store
        self.config = config or AppConfig()
        self._live: dict[str, _Live] = {}
        self._guard = threading.Lock()
        self._recording: dict[str, str] = {}  # way_id -> erw session id
        self._negotiating: dict[str, NegotiationSession] = {}  # route_id -> session

    # -------------------------------------------------------------- capture

    def start_walk(
        self,
        way_id: str,
        started_ts: int,
        session_id: str | None = None,
        video_ref: str | None = None,
    ) -> ErwSession:
        self.store.load_way(way_id)
        with self._guard:
            if way_id in self._recording:
                raise StateError(f"way {way_id} already has a walk in progress")
            session = start_session(
                session_id or f"erw-{way_id}-{started_ts}", way_id, started_ts, video_ref
            )
            self._recording[way_id] = session.id
        self.store.save_erw(session)
        return session

    def _open_walk(self, way_id: str) -> ErwSession:
        session_id = self._recording.get(way_id)
        if session_id is None:
            raise NotFoundError(f"no walk in progress for way {way_id}")
        return self.store.load_erw(session_id)

    def walk_fix(self, way_id: str, fix: GpsFix) -> ErwSession:
        session = append_fix(self._open_walk(way_id), fix)
        self.store.save_erw(session)
        return session

    def walk_poi(
        self,
        way_id: str,
        at: GpsFix,
        photos: Sequence[str],
        note: str = "",
        captured_by: str = "trainer",
    ) -> ErwSession:
        session = capture_poi(self._open_walk(way_id), at, photos, note, captured_by)
        self.store.save_erw(session)
        return session

    def finish_walk(self, way_id: str) -> tuple[ErwSession, RouteDefinition]:
        """Freeze the walk and open its first draft route for curation."""
        session, path = finish_session(
            self._open_walk(way_id), self.config.simplify_tolerance_m
        )
        self.store.save_erw(session)
        draft = draft_from_walk(session, path)
        self.store.save_route(draft)
        with self._guard:
            self._recording.pop(way_id, None)
        return session, draft

    def ingest_walk(
        self, way_id: str, fixes: Sequence[GpsFix], session_id: str | None = None
    ) -> tuple[ErwSession, RouteDefinition]:
        """One-shot capture from a recorded trace (no live device)."""
        self.store.load_way(way_id)
        if not fixes:
            raise InsufficientData("an ingested trace needs fixes")
        session = start_session(
            session_id or f"erw-{way_id}-{fixes[0].ts}", way_id, fixes[0].ts
        )
        for fix in fixes:
            session = append_fix(session, fix)
        session, path = finish_session(session, self.config.simplify_tolerance_m)
        self.store.save_erw(session)
        draft = draft_from_walk(session, path)
        self.store.save_route(draft)
        return session, draft

    def package_walk(
        self,
        erw_id: str,
        destination: str,
        assets: Mapping[str, MediaAsset],
    ) -> tuple[TransferPackage, str]:
        session = self.store.load_erw(erw_id)
        package = build_transfer_package(session, destination, assets)
        directory = self.store.root / "packages" / erw_id
        write_package(package, directory)
        return package, str(directory)

    # ------------------------------------------------------------- curation

    def curate(self, route_id: str, edits: Sequence[dict]) -> RouteDefinition:
        """Apply a batch of edits; either every edit lands or none do."""
        route = self.store.load_route(route_id)
        chain: list[RouteDefinition] = []
        for raw in edits:
            route = apply_edit(route, edit_from_dict(raw))
            chain.append(route)
        for version in chain:
            self.store.save_route(version)
        return route

    # ---------------------------------------------------------- negotiation

    def open_negotiation(
        self, route_id: str, neg_id: str | None = None
    ) -> NegotiationSession:
        with self._guard:
            if route_id in self._negotiating:
                raise StateError(f"route {route_id} is already under negotiation")
        route = self.store.load_route(route_id)
        under, neg = start_negotiation(route, neg_id)
        self.store.save_route(under)
        self.store.save_negotiation(neg)
        with self._guard:
            self._negotiating[route_id] = neg
        return neg

    def _open_neg(self, route_id: str) -> NegotiationSession:
        neg = self._negotiating.get(route_id)
        if neg is None:
            raise NotFoundError(f"no open negotiation for route {route_id}")
        return neg

    def step_negotiation(
        self, route_id: str, action: str, ts_ms: int, detail: str | None = None
    ) -> NegotiationSession:
        neg, feedback = negotiation_step(self._open_neg(route_id), action, ts_ms, detail)
        self.store.save_negotiation(neg)
        self.store.append_transcript(neg.id, [feedback.to_dict()])
        with self._guard:
            self._negotiating[route_id] = neg
        return neg

    def finalize_negotiation(self, route_id: str) -> RouteDefinition:
        working = finalize_route(self._open_neg(route_id))
        self.store.save_route(working)
        with self._guard:
            self._negotiating.pop(route_id, None)
        return working

    def preview(self, route_id: str, poi_id: str) -> PreviewCard:
        neg = self._negotiating.get(route_id)
        route = neg.route if neg is not None else self.store.load_route(route_id)
        return preview_poi(route, poi_id)

    # ------------------------------------------------------------- training

    def begin_training(
        self,
        route_id: str,
        config: TrainingConfig,
        consent_id: str,
        session_id: str | None = None,
        started_ts: int | None = None,
        route_version: int | None = None,
    ) -> list[FeedEvent]:
        """Open a live session; returns the start envelope(s).

        The feed check runs before anything else so a refused remote session
        does not burn its single-use consent.
        """
        if config.feed_mandatory and not self.config.feed_enabled:
            raise FeedUnavailableError(
                "remote supervision requires the live feed, which is disabled"
            )
        route = self.store.load_route(route_id, route_version)
        consent = self.store.consents.get(consent_id)
        session = begin_session(
            route,
            config,
            consent,
            self.store.consents,
            settings=self.config.engine,
            session_id=session_id,
            started_ts=started_ts,
        )
        live = _Live(session=session)
        with self._guard:
            if session.id in self._live:
                raise StateError(f"session {session.id} is already live")
            self._live[session.id] = live
        with live.lock:
            return self._publish(live)

    def _require_live(self, session_id: str) -> _Live:
        live = self._live.get(session_id)
        if live is None:
            raise NotFoundError(f"no live session {session_id}")
        return live

    def _publish(self, live: _Live) -> list[FeedEvent]:
        # caller holds live.lock
        fresh = live.session.envelopes[live.published :]
        live.published += len(fresh)
        out = [
            FeedEvent(live.session.id, event.seq, event, position)
            for event, position in fresh
        ]
        self.store.append_feed(live.session.id, [e.to_dict() for e in out])
        for q in live.subscribers:
            for envelope in out:
                q.put(envelope)
        return out

    def ingest_fix(self, session_id: str, fix: GpsFix) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.ingest_fix(fix)
            return self._publish(live)

    def answer_quiz(
        self, session_id: str, quiz_id: str, choice: str, ts: int | None = None
    ) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.answer_quiz(quiz_id, choice, ts=ts)
            return self._publish(live)

    def report_unexpected(
        self, session_id: str, kind: str, ts: int | None = None
    ) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.report_unexpected(kind, ts=ts)
            return self._publish(live)

    def request_help(
        self, session_id: str, reason: str = "", ts: int | None = None
    ) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.request_help(reason, ts=ts)
            return self._publish(live)

    def log_assist(
        self, session_id: str, source: str, note: str = "", ts: int | None = None
    ) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.log_assist(source, note, ts=ts)
            return self._publish(live)

    def activate_ar(self, session_id: str, ts: int | None = None) -> list[FeedEvent]:
        live = self._require_live(session_id)
        with live.lock:
            live.session.activate_ar(ts=ts)
            return self._publish(live)

    def end_training(
        self, session_id: str, self_report: int | None = None, ts: int | None = None
    ) -> SessionRecord:
        live = self._require_live(session_id)
        with live.lock:
            record = live.session.end(self_report=self_report, ts=ts)
            self._publish(live)
            for q in live.subscribers:
                q.put(None)  # stream sentinel
            live.subscribers.clear()
        self.store.save_session_record(record)
        with self._guard:
            self._live.pop(session_id, None)
        return record

    # ----------------------------------------------------------------- feed

    def feed(self, session_id: str, from_seq: int = 0) -> list[FeedEvent]:
        """Snapshot of the feed from a sequence number on (poll fallback)."""
        live = self._live.get(session_id)
        if live is not None:
            with live.lock:
                envelopes = [
                    FeedEvent(session_id, event.seq, event, position)
                    for event, position in live.session.envelopes
                ]
        else:
            envelopes = [FeedEvent.from_dict(d) for d in self.store.load_feed(session_id)]
        return [e for e in envelopes if e.seq >= from_seq]

    def subscribe(self, session_id: str, from_seq: int = 0) -> Iterator[FeedEvent]:
        """Ordered live stream; replays the backlog, then follows until the
        session ends. On an already-ended session it just replays."""
        live = self._live.get(session_id)
        if live is None:
            yield from self.feed(session_id, from_seq)
            return
        q: queue.SimpleQueue = queue.SimpleQueue()
        with live.lock:
            backlog = [
                FeedEvent(session_id, event.seq, event, position)
                for event, position in live.session.envelopes
                if event.seq >= from_seq
            ]
            ended = live.session.ended
            if not ended:
                live.subscribers.append(q)
        last = from_seq - 1
        for envelope in backlog:
            yield envelope
            last = envelope.seq
        if ended:
            return
        try:
            while True:
                item = q.get()
                if item is None:
                    return
                if item.seq <= last:
                    continue
                yield item
                last = item.seq
        finally:
            with live.lock:
                if q in live.subscribers:
                    live.subscribers.remove(q)

    # ------------------------------------------------------------ reporting

    def indicators_for(self, session_id: str) -> dict:
        if session_id in self._live:
            raise StateError(
                "session is still running; indicators come from the frozen record"
            )
        return indicator_report(self.store.load_session_record(session_id))

    def trend_for(self, way_id: str) -> dict:
        self.store.load_way(way_id)
        records = self.store.list_session_records(way_id)
        return learning_trend(records, self.config.policy).to_dict()
