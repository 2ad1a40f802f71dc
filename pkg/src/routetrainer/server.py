"""HTTP surface over the training service.

Every route body and response is plain JSON in the same wire shapes the
dataclasses serialize to, so a client can round-trip entities without a
schema layer. Domain errors map onto status codes in one place.
"""

from __future__ import annotations

import base64

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .config import AppConfig
from .engine import TrainingConfig
from .errors import (
    ClassificationError,
    ConflictError,
    ConsentError,
    FeedUnavailableError,
    IncompleteNegotiation,
    NotFoundError,
    RouteTrainerError,
    StateError,
    SyncPolicyError,
    ValidationFailed,
    EditRejected,
)
from .erw import MediaAsset
from .geo import GeoPoint, GpsFix
from .model import Way
from .service import TrainingService
from .store import Store

_STATUS = (
    (NotFoundError, 404),
    (ConflictError, 409),
    (StateError, 409),
    (IncompleteNegotiation, 409),
    (ValidationFailed, 422),
    (EditRejected, 422),
    (ConsentError, 403),
    (SyncPolicyError, 403),
    (ClassificationError, 403),
    (FeedUnavailableError, 503),
)


def _status_for(exc: RouteTrainerError) -> int:
    for kind, code in _STATUS:
        if isinstance(exc, kind):
            return code
    return 400


def _fix_from_body(d: dict) -> GpsFix:
    return GpsFix(GeoPoint(d["lat"], d["lon"]), d["ts_ms"], d.get("accuracy_m"))


def _envelopes(events) -> dict:
    return {"events": [e.to_dict() for e in events]}


def _negotiation_view(service: TrainingService, route_id: str) -> dict:
    neg = service._open_neg(route_id)
    card = service.preview(route_id, neg.current.poi_id)
    return {
        "id": neg.id,
        "route_id": route_id,
        "cursor": neg.cursor,
        "all_decided": neg.all_decided(),
        "records": [r.to_dict() for r in neg.records],
        "current": {
            "poi_id": card.poi_id,
            "payload": card.payload,
            "preview_only": card.preview_only,
        },
    }


def create_app(store: Store, config: AppConfig | None = None) -> FastAPI:
    service = TrainingService(store, config)
    app = FastAPI(title="routetrainer")
    app.state.service = service

    @app.exception_handler(RouteTrainerError)
    async def _domain_error(request: Request, exc: RouteTrainerError):
        detail: dict = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, SyncPolicyError):
            detail["offending"] = list(exc.offending)
        if isinstance(exc, ValidationFailed) and exc.report is not None:
            detail["report"] = exc.report
        return JSONResponse(status_code=_status_for(exc), content=detail)

    # ways ------------------------------------------------------------------

    @app.post("/ways", status_code=201)
    def create_way(payload: dict) -> dict:
        way = Way.from_dict(payload)
        store.save_way(way)
        return way.to_dict()

    @app.get("/ways/{way_id}")
    def get_way(way_id: str) -> dict:
        return store.load_way(way_id).to_dict()

    @app.get("/ways/{way_id}/trend")
    def get_trend(way_id: str) -> dict:
        return service.trend_for(way_id)

    # capture ---------------------------------------------------------------

    @app.post("/erw/{way_id}/start", status_code=201)
    def erw_start(way_id: str, payload: dict) -> dict:
        session = service.start_walk(
            way_id,
            payload["started_ts"],
            session_id=payload.get("session_id"),
            video_ref=payload.get("video_ref"),
        )
        return session.to_dict()

    @app.post("/erw/{way_id}/fix")
    def erw_fix(way_id: str, payload: dict) -> dict:
        return service.walk_fix(way_id, _fix_from_body(payload)).to_dict()

    @app.post("/erw/{way_id}/poi")
    def erw_poi(way_id: str, payload: dict) -> dict:
        session = service.walk_poi(
            way_id,
            _fix_from_body(payload["at"]),
            payload["photos"],
            note=payload.get("note", ""),
            captured_by=payload.get("captured_by", "trainer"),
        )
        return session.to_dict()

    @app.post("/erw/{way_id}/finish")
    def erw_finish(way_id: str) -> dict:
        session, draft = service.finish_walk(way_id)
        return {"session": session.to_dict(), "draft_route": draft.to_dict()}

    @app.post("/erw/{erw_id}/package")
    def erw_package(erw_id: str, payload: dict) -> dict:
        assets = {
            asset_id: MediaAsset(
                id=asset_id,
                data=base64.b64decode(spec["data_b64"]),
                media_type=spec.get("media_type", "image/jpeg"),
            )
            for asset_id, spec in payload.get("assets", {}).items()
        }
        package, directory = service.package_walk(
            erw_id, payload["destination"], assets
        )
        return {
            "directory": directory,
            "items": [
                {"id": i.item_id, "class": i.data_class.value, "path": i.path}
                for i in package.items
            ],
        }

    # curation and negotiation ----------------------------------------------

    @app.post("/routes/{route_id}/edits")
    def route_edits(route_id: str, payload: dict) -> dict:
        return service.curate(route_id, payload["edits"]).to_dict()

    @app.post("/negotiations/{route_id}", status_code=201)
    def negotiation_open(route_id: str, payload: dict | None = None) -> dict:
        service.open_negotiation(route_id, (payload or {}).get("neg_id"))
        return _negotiation_view(service, route_id)

    @app.post("/negotiations/{route_id}/step")
    def negotiation_step_ep(route_id: str, payload: dict) -> dict:
        service.step_negotiation(
            route_id,
            payload["action"],
            payload["ts_ms"],
            detail=payload.get("detail"),
        )
        return _negotiation_view(service, route_id)

    @app.post("/negotiations/{route_id}/finalize")
    def negotiation_finalize(route_id: str) -> dict:
        return service.finalize_negotiation(route_id).to_dict()

    # training --------------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def open_session(payload: dict) -> dict:
        config = TrainingConfig.from_dict(
            {
                "supervision": payload["supervision"],
                "modalities": payload["modalities"],
            }
        )
        events = service.begin_training(
            payload["route_id"],
            config,
            payload["consent_id"],
            session_id=payload.get("session_id"),
            started_ts=payload.get("started_ts"),
            route_version=payload.get("route_version"),
        )
        return {"session_id": events[0].session_id, **_envelopes(events)}

    @app.post("/sessions/{session_id}/fix")
    def session_fix(session_id: str, payload: dict) -> dict:
        return _envelopes(service.ingest_fix(session_id, _fix_from_body(payload)))

    @app.post("/sessions/{session_id}/quiz")
    def session_quiz(session_id: str, payload: dict) -> dict:
        return _envelopes(
            service.answer_quiz(
                session_id,
                payload["quiz_id"],
                payload["choice"],
                ts=payload.get("ts_ms"),
            )
        )

    @app.post("/sessions/{session_id}/report")
    def session_report(session_id: str, payload: dict) -> dict:
        if payload.get("help"):
            events = service.request_help(
                session_id, payload.get("reason", ""), ts=payload.get("ts_ms")
            )
        else:
            events = service.report_unexpected(
                session_id, payload["kind"], ts=payload.get("ts_ms")
            )
        return _envelopes(events)

    @app.post("/sessions/{session_id}/assist")
    def session_assist(session_id: str, payload: dict) -> dict:
        if payload.get("ar"):
            events = service.activate_ar(session_id, ts=payload.get("ts_ms"))
        else:
            events = service.log_assist(
                session_id,
                payload["source"],
                note=payload.get("note", ""),
                ts=payload.get("ts_ms"),
            )
        return _envelopes(events)

    @app.post("/sessions/{session_id}/end")
    def session_end(session_id: str, payload: dict | None = None) -> dict:
        body = payload or {}
        record = service.end_training(
            session_id, self_report=body.get("self_report"), ts=body.get("ts_ms")
        )
        return {"record": record.to_dict()}

    @app.get("/sessions/{session_id}/feed")
    def session_feed(session_id: str, from_seq: int = 0, follow: int = 0):
        if follow:
            def stream():
                for envelope in service.subscribe(session_id, from_seq):
                    yield envelope.ndjson_line()
            return StreamingResponse(stream(), media_type="application/x-ndjson")
        body = "".join(e.ndjson_line() for e in service.feed(session_id, from_seq))
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/indicators")
    def session_indicators(session_id: str) -> dict:
        return service.indicators_for(session_id)

    return app
