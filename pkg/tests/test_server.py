"""HTTP surface: endpoint flows, wire shapes, and the error-code mapping."""

import base64
import json

import pytest
from fastapi.testclient import TestClient

from routetrainer.config import AppConfig
from routetrainer.model import PoiKind
from routetrainer.privacy import ConsentScope
from routetrainer.server import create_app
from routetrainer.store import Store

from conftest import DISCLOSURE, SESSION_T0, draft_route, make_way, working_route

T0 = 1_700_000_000_000


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path / "data")
    s.save_way(make_way())
    return s


@pytest.fixture
def client(store):
    with TestClient(create_app(store)) as c:
        yield c


def grant(store, consent_id=None, ts=SESSION_T0):
    return store.consents.grant(
        user_id="user-1", scope=ConsentScope.TRAINING_TELEMETRY,
        disclosure=DISCLOSURE, granted_ts=ts, consent_id=consent_id,
    )


def post(client, path, body=None, expect=200):
    r = client.post(path, json=body if body is not None else {})
    assert r.status_code == expect, f"{path}: {r.status_code} {r.text}"
    return r.json()


def line_points(route, step_m=10.0):
    line = route.geometry
    along, out = 0.0, []
    while along <= line.length_m:
        out.append(line.point_at(along))
        along += step_m
    return out


# ----------------------------------------------------------------- way + erw


def test_way_create_and_fetch(client):
    way = make_way("way-2").to_dict()
    created = post(client, "/ways", way, expect=201)
    assert created == way
    assert client.get("/ways/way-2").json() == way


def test_capture_over_http_yields_draft(client):
    route = working_route()  # geometry donor for fix coordinates
    points = line_points(route)
    post(client, "/erw/way-1/start", {"started_ts": T0}, expect=201)
    for i, p in enumerate(points[:20]):
        post(client, "/erw/way-1/fix", {"ts_ms": T0 + i * 1000, "lat": p.lat, "lon": p.lon})
    poi_fix = {"ts_ms": T0 + 19_500, "lat": points[19].lat, "lon": points[19].lon}
    post(client, "/erw/way-1/poi", {"at": poi_fix, "photos": ["ph-1"], "note": "gate"})
    for i, p in enumerate(points[20:]):
        post(client, "/erw/way-1/fix", {"ts_ms": T0 + 20_000 + i * 1000, "lat": p.lat, "lon": p.lon})
    out = post(client, "/erw/way-1/finish")
    assert out["session"]["state"] == "finished"
    assert out["draft_route"]["version"] == 1
    assert [p["kind"] for p in out["draft_route"]["pois"]] == ["candidate"]


def test_second_start_on_same_way_conflicts(client):
    post(client, "/erw/way-1/start", {"started_ts": T0}, expect=201)
    body = post(client, "/erw/way-1/start", {"started_ts": T0 + 1}, expect=409)
    assert body["error"] == "StateError"


def test_package_endpoint_writes_and_blocks_cloud(client, store):
    route = working_route()
    points = line_points(route)
    post(client, "/erw/way-1/start", {"started_ts": T0, "session_id": "erw-pkg"}, expect=201)
    for i, p in enumerate(points):
        post(client, "/erw/way-1/fix", {"ts_ms": T0 + i * 1000, "lat": p.lat, "lon": p.lon})
    post(client, "/erw/way-1/poi", {
        "at": {"ts_ms": T0 + len(points) * 1000, "lat": points[-1].lat, "lon": points[-1].lon},
        "photos": ["ph-1"],
    })
    post(client, "/erw/way-1/finish")

    assets = {"ph-1": {"data_b64": base64.b64encode(b"jpeg").decode(), "media_type": "image/jpeg"}}
    out = post(client, "/erw/erw-pkg/package", {"destination": "trainer_device", "assets": assets})
    assert (store.root / "packages" / "erw-pkg" / "manifest.json").exists()
    assert {i["path"] for i in out["items"]} >= {"session.json", "trace.csv"}

    body = post(client, "/erw/erw-pkg/package",
                {"destination": "cloud", "assets": assets}, expect=403)
    assert body["error"] == "ClassificationError"


# -------------------------------------------------- curation and negotiation


def test_edit_batch_and_error_codes(client, store):
    store.save_route(draft_route())
    out = post(client, "/routes/draft-1/edits", {"edits": [
        {"op": "edit_poi", "poi_id": "re0", "radius_m": 30.0},
    ]})
    assert out["version"] == 2

    body = post(client, "/routes/draft-1/edits", {"edits": [
        {"op": "remove_poi", "poi_id": "not-there"},
    ]}, expect=404)
    assert body["error"] == "NotFoundError"

    # rejected edit carries the 422 mapping
    body = post(client, "/routes/draft-1/edits", {"edits": [
        {"op": "edit_poi", "poi_id": "re0", "radius_m": 9999.0},
    ]}, expect=422)
    assert body["error"] == "EditRejected"


def _negotiate_to_working(client, store):
    store.save_route(draft_route())
    view = post(client, "/negotiations/draft-1", {}, expect=201)
    assert view["cursor"] == 0 and view["all_decided"] is False
    assert view["current"]["preview_only"] is True

    route = draft_route()
    ts = 0
    for poi in route.pois:
        ts += 1
        post(client, "/negotiations/draft-1/step",
             {"action": "SelectPhoto", "ts_ms": ts, "detail": poi.photos[0]})
        if poi.kind is PoiKind.LANDMARK:
            ts += 1
            post(client, "/negotiations/draft-1/step",
                 {"action": "ApproveInstruction", "ts_ms": ts})
        ts += 1
        view = post(client, "/negotiations/draft-1/step", {"action": "Confirm", "ts_ms": ts})
        ts += 1
        view = post(client, "/negotiations/draft-1/step", {"action": "Next", "ts_ms": ts})
    assert view["all_decided"] is True
    return post(client, "/negotiations/draft-1/finalize")


def test_negotiation_flow_over_http(client, store):
    working = _negotiate_to_working(client, store)
    assert working["status"] == "working"
    assert store.load_route("draft-1").status.value == "working"


def test_finalize_with_undecided_poi_is_409(client, store):
    store.save_route(draft_route())
    post(client, "/negotiations/draft-1", {}, expect=201)
    body = post(client, "/negotiations/draft-1/finalize", expect=409)
    assert body["error"] == "IncompleteNegotiation"


# ------------------------------------------------------------------ training


def start_session_http(client, store, session_id="live-1", consent_id=None):
    store.save_route(working_route())
    consent = grant(store, consent_id=consent_id)
    out = post(client, "/sessions", {
        "route_id": "route-1",
        "consent_id": consent.id,
        "supervision": "in_person",
        "modalities": ["text", "audio"],
        "session_id": session_id,
        "started_ts": SESSION_T0,
    }, expect=201)
    return out, consent


def drive_http(client, session_id, route, alongs, start_ts=SESSION_T0 + 1000):
    ts = start_ts
    events = []
    for along in alongs:
        ts += 5000
        p = route.geometry.point_at(along)
        out = post(client, f"/sessions/{session_id}/fix",
                   {"ts_ms": ts, "lat": p.lat, "lon": p.lon})
        events.extend(out["events"])
    return events, ts


def test_training_session_over_http(client, store):
    out, _ = start_session_http(client, store)
    assert out["session_id"] == "live-1"
    assert out["events"][0]["event"]["type"] == "SessionStart"
    assert out["events"][0]["seq"] == 0

    route = store.load_route("route-1")
    events, ts = drive_http(client, "live-1", route, range(0, 1001, 10))
    types = [e["event"]["type"] for e in events]
    assert "VicinityAlert" in types and "Instruction" in types

    end = post(client, "/sessions/live-1/end", {"self_report": 4, "ts_ms": ts + 1000})
    assert end["record"]["session_id"] == "live-1"
    assert end["record"]["self_report"] == 4

    report = client.get("/sessions/live-1/indicators").json()
    assert report["accuracy"] == 1.0 and report["session_id"] == "live-1"

    trend = client.get("/ways/way-1/trend").json()
    assert trend["way_id"] == "way-1"
    assert [p["session_id"] for p in trend["series"]] == ["live-1"]


def test_feed_poll_is_ndjson_and_filters(client, store):
    start_session_http(client, store)
    route = store.load_route("route-1")
    drive_http(client, "live-1", route, range(0, 301, 10))

    r = client.get("/sessions/live-1/feed")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("application/x-ndjson")
    rows = [json.loads(line) for line in r.text.splitlines() if line]
    assert [row["seq"] for row in rows] == list(range(len(rows)))
    assert rows[0]["event"]["type"] == "SessionStart"

    tail = client.get("/sessions/live-1/feed", params={"from_seq": 2})
    tail_rows = [json.loads(line) for line in tail.text.splitlines() if line]
    assert [row["seq"] for row in tail_rows] == [row["seq"] for row in rows if row["seq"] >= 2]


def test_feed_follow_replays_ended_session(client, store):
    start_session_http(client, store)
    route = store.load_route("route-1")
    _, ts = drive_http(client, "live-1", route, range(0, 301, 10))
    post(client, "/sessions/live-1/end", {"ts_ms": ts + 1000})

    with client.stream("GET", "/sessions/live-1/feed", params={"follow": 1}) as r:
        assert r.status_code == 200
        body = "".join(chunk for chunk in r.iter_text())
    rows = [json.loads(line) for line in body.splitlines() if line]
    assert rows[-1]["event"]["type"] == "SessionEnd"
    assert [row["seq"] for row in rows] == list(range(len(rows)))


def test_report_help_and_quiz_over_http(client, store):
    from routetrainer.model import SubPath, SupportMode

    route = working_route(
        subpaths=(SubPath(0.0, 500.0, SupportMode.QUIZ),
                  SubPath(500.0, 1000.0, SupportMode.ACTIONABLE)),
    )
    store.save_route(route)
    consent = grant(store)
    post(client, "/sessions", {
        "route_id": "route-1", "consent_id": consent.id,
        "supervision": "in_person", "modalities": ["text"],
        "session_id": "live-q", "started_ts": SESSION_T0,
    }, expect=201)

    events, ts = drive_http(client, "live-q", route, range(0, 301, 10))
    prompt = next(e for e in events if e["event"]["type"] == "QuizPrompt")
    payload = prompt["event"]["payload"]
    correct = next(c["id"] for c in payload["choices"] if c["poi_id"] == "lm0")
    out = post(client, "/sessions/live-q/quiz",
               {"quiz_id": payload["quiz_id"], "choice": correct, "ts_ms": ts + 100})
    assert out["events"][0]["event"]["payload"]["correct"] is True

    out = post(client, "/sessions/live-q/report", {"kind": "Lost", "ts_ms": ts + 200})
    assert [e["event"]["type"] for e in out["events"]] == ["UnexpectedReport", "RecoveryPrompt"]
    out = post(client, "/sessions/live-q/report", {"help": True, "reason": "confused", "ts_ms": ts + 300})
    assert [e["event"]["type"] for e in out["events"]] == ["HelpRequest"]
    out = post(client, "/sessions/live-q/assist",
               {"source": "InPersonTrainer", "note": "walked over", "ts_ms": ts + 400})
    assert [e["event"]["type"] for e in out["events"]] == ["AssistLogged"]


# --------------------------------------------------------------- error codes


def test_missing_resources_are_404(client):
    assert client.get("/ways/nope").status_code == 404
    assert client.get("/ways/nope/trend").status_code == 404
    assert client.get("/sessions/nope/indicators").status_code == 404
    assert client.get("/sessions/nope/feed").status_code == 404
    body = client.get("/ways/nope").json()
    assert body["error"] == "NotFoundError" and "nope" in body["detail"]


def test_spent_consent_is_403(client, store):
    _, consent = start_session_http(client, store)
    body = post(client, "/sessions", {
        "route_id": "route-1", "consent_id": consent.id,
        "supervision": "in_person", "modalities": ["text"],
        "session_id": "live-2",
    }, expect=403)
    assert body["error"] == "ConsentError"


def test_remote_without_feed_is_503(store):
    with TestClient(create_app(store, AppConfig(feed_enabled=False))) as client:
        store.save_route(working_route())
        consent = grant(store)
        body = post(client, "/sessions", {
            "route_id": "route-1", "consent_id": consent.id,
            "supervision": "remote", "modalities": ["text"],
            "session_id": "live-1",
        }, expect=503)
        assert body["error"] == "FeedUnavailableError"
        assert not store.consents.is_spent(consent.id)


def test_indicators_on_live_session_is_409(client, store):
    start_session_http(client, store)
    r = client.get("/sessions/live-1/indicators")
    assert r.status_code == 409
    assert r.json()["error"] == "StateError"
