"""Record dashboard fixtures from the real service.

Drives a complete capture -> curate -> negotiate -> train flow over the HTTP
app and snapshots the responses the dashboard consumes. Everything under
frontend/fixtures/ is rewritten in place; the TS suite then runs offline
against these files.

Run from the repository root with the Python package installed:

    python3 frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from routetrainer.geo import destination_point
from routetrainer.privacy import ConsentScope
from routetrainer.server import create_app
from routetrainer.store import Store

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

T0 = 1_755_100_000_000            # walk capture
T1 = T0 + 7_200_000               # first training session
T2 = T1 + 7_200_000               # second training session

WAY = {
    "id": "way-fx",
    "origin_label": "Community center",
    "origin": {"lat": 40.0, "lon": -3.0},
    "destination_label": "Bus stop 14",
    "destination": {"lat": 40.0, "lon": -2.9906},
    "owner_user_id": "user-7",
    "direction_note": "outbound",
}

# capture plan: (along_m, photos, note, landmark instruction or None)
CAPTURES = [
    (200.0, ["ph-l0-a", "ph-l0-b"], "red kiosk", "Turn left at the red kiosk"),
    (350.0, ["ph-r0-a"], "long fence", None),
    (450.0, ["ph-l1-a", "ph-l1-b"], "", "Cross at the zebra and keep right"),
    (550.0, ["ph-r1-a"], "", None),
    (650.0, ["ph-l2-a", "ph-l2-b"], "", "Take the ramp down to the stop"),
]


def east_of(origin: dict, along_m: float, north_m: float = 0.0) -> dict:
    p = destination_point(_GP(origin["lat"], origin["lon"]), 90.0, along_m)
    if north_m:
        p = destination_point(p, 0.0, north_m)
    return {"lat": p.lat, "lon": p.lon}


class _GP:
    def __init__(self, lat: float, lon: float):
        self.lat, self.lon = lat, lon


def must(resp, code=200):
    if resp.status_code != code:
        raise SystemExit(f"{resp.request.method} {resp.url} -> {resp.status_code}: {resp.text}")
    return resp


def record() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.TemporaryDirectory()
    store = Store(Path(tmp.name))
    app = create_app(store)
    service = app.state.service
    client = TestClient(app)

    must(client.post("/ways", json=WAY), 201)

    # ---- exploratory walk: 0..800 m east, fix every 10 m / 5 s -------------
    must(
        client.post(
            f"/erw/{WAY['id']}/start",
            json={"started_ts": T0, "session_id": "erw-fx", "video_ref": "vid-fx"},
        ),
        201,
    )
    capture_at = {c[0]: c for c in CAPTURES}
    for i in range(81):
        along = i * 10.0
        fix = {**east_of(WAY["origin"], along), "ts_ms": T0 + i * 5000, "accuracy_m": 4.0}
        must(client.post(f"/erw/{WAY['id']}/fix", json=fix))
        if along in capture_at:
            _, photos, note, _ = capture_at[along]
            must(
                client.post(
                    f"/erw/{WAY['id']}/poi",
                    json={"at": fix, "photos": photos, "note": note},
                )
            )
    erw = must(client.post(f"/erw/{WAY['id']}/finish")).json()
    write_json("erw.json", erw)

    draft = erw["draft_route"]
    route_id = draft["id"]
    candidates = [p["id"] for p in draft["pois"]]
    assert len(candidates) == len(CAPTURES), candidates

    # ---- curation: promote 3 landmarks + 2 reassurances --------------------
    edits = []
    for poi_id, (_, _, _, instruction) in zip(candidates, CAPTURES):
        if instruction:
            # instruction first: a landmark without one would fail validation
            edits.append({"op": "edit_instruction", "poi_id": poi_id, "instruction": instruction})
            edits.append({"op": "promote", "poi_id": poi_id, "kind": "landmark"})
        else:
            edits.append({"op": "promote", "poi_id": poi_id, "kind": "reassurance"})
    curated = must(client.post(f"/routes/{route_id}/edits", json={"edits": edits})).json()
    write_json("route_curated.json", curated)

    # ---- negotiation: slideshow over all five POIs --------------------------
    opened = must(client.post(f"/negotiations/{route_id}", json={"neg_id": "neg-fx"}), 201).json()
    write_json("negotiation.json", opened)

    card = service.preview(route_id, opened["current"]["poi_id"])
    write_json(
        "preview.json",
        {"poi_id": card.poi_id, "payload": card.payload, "preview_only": card.preview_only},
    )

    ts = T0 + 900_000
    view = opened
    for n, (poi_id, (_, photos, _, instruction)) in enumerate(zip(candidates, CAPTURES)):
        assert view["current"]["poi_id"] == poi_id, (view["current"], poi_id)

        def step(action, detail=None):
            nonlocal ts, view
            ts += 1000
            body = {"action": action, "ts_ms": ts}
            if detail is not None:
                body["detail"] = detail
            view = must(client.post(f"/negotiations/{route_id}/step", json=body)).json()

        step("SelectPhoto", photos[-1])
        if instruction:
            step("ApproveInstruction")
        step("Confirm")
        if n < len(candidates) - 1:
            step("Next")
    assert view["all_decided"], view
    write_json("negotiation_decided.json", view)

    working = must(client.post(f"/negotiations/{route_id}/finalize")).json()

    # ---- adaptation surface: split the route, quiz the back half ------------
    length = working["subpaths"][0]["end_m"]
    route = must(
        client.post(
            f"/routes/{route_id}/edits",
            json={
                "edits": [
                    {"op": "split_subpath", "at_m": 500.0},
                    {"op": "set_subpath_mode", "start_m": 500.0, "end_m": length, "mode": "quiz"},
                ]
            },
        )
    ).json()
    write_json("route.json", route)

    # ---- session fix-0: abandoned before the first landmark -----------------
    store.consents.grant("user-7", ConsentScope.TRAINING_TELEMETRY,
                         "telemetry for training supervision", T1 - 60_000, "c-fx0")
    must(
        client.post(
            "/sessions",
            json={
                "route_id": route_id,
                "supervision": "remote",
                "modalities": ["text", "audio"],
                "consent_id": "c-fx0",
                "session_id": "fix-0",
                "started_ts": T1,
            },
        ),
        201,
    )
    for i in range(16):   # 0..150 m, stops short of every geofence
        must(
            client.post(
                "/sessions/fix-0/fix",
                json={**east_of(WAY["origin"], i * 10.0), "ts_ms": T1 + i * 5000, "accuracy_m": 5.0},
            )
        )
    must(client.post("/sessions/fix-0/end", json={"self_report": 2, "ts_ms": T1 + 16 * 5000}))

    # ---- session fix-1: full walk with one deviation, help, a wrong quiz ----
    store.consents.grant("user-7", ConsentScope.TRAINING_TELEMETRY,
                         "telemetry for training supervision", T2 - 60_000, "c-fx1")
    must(
        client.post(
            "/sessions",
            json={
                "route_id": route_id,
                "supervision": "remote",
                "modalities": ["text", "audio"],
                "consent_id": "c-fx1",
                "session_id": "fix-1",
                "started_ts": T2,
            },
        ),
        201,
    )

    # (along, north offset): a 3-fix excursion past 30 m right after lm-1
    plan: list[tuple[float, float]] = []
    for i in range(81):
        along = i * 10.0
        plan.append((along, 0.0))
        if along == 460.0:
            plan.extend([(470.0, 35.0), (475.0, 40.0), (480.0, 45.0), (485.0, 5.0)])
    ts = T2
    for along, north in plan:
        ts += 5000
        out = must(
            client.post(
                "/sessions/fix-1/fix",
                json={**east_of(WAY["origin"], along, north), "ts_ms": ts, "accuracy_m": 5.0},
            )
        ).json()
        for env in out["events"]:
            if env["event"]["type"] == "QuizPrompt":
                payload = env["event"]["payload"]
                wrong = next(
                    c["id"] for c in payload["choices"] if c["poi_id"] != payload["poi_id"]
                )
                must(
                    client.post(
                        "/sessions/fix-1/quiz",
                        json={"quiz_id": payload["quiz_id"], "choice": wrong, "ts_ms": ts + 1000},
                    )
                )
        if along == 560.0:
            must(
                client.post(
                    "/sessions/fix-1/report",
                    json={"help": True, "reason": "not sure this is the right side", "ts_ms": ts + 1000},
                )
            )
            must(
                client.post(
                    "/sessions/fix-1/assist",
                    json={"source": "RemoteTrainer", "note": "talked through the crossing", "ts_ms": ts + 2000},
                )
            )
    must(client.post("/sessions/fix-1/end", json={"self_report": 4, "ts_ms": ts + 5000}))

    feed = must(client.get("/sessions/fix-1/feed")).text
    (FIXTURES / "session.ndjson").write_text(feed)

    write_json("indicators.json", must(client.get("/sessions/fix-1/indicators")).json())
    write_json("trend.json", must(client.get(f"/ways/{WAY['id']}/trend")).json())

    check(feed)
    tmp.cleanup()


def write_json(name: str, data) -> None:
    (FIXTURES / name).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def check(feed: str) -> None:
    """Invariants the TS suite leans on; regeneration must keep them."""
    rows = [json.loads(line) for line in feed.splitlines()]
    types = [r["event"]["type"] for r in rows]
    assert [r["seq"] for r in rows] == list(range(len(rows))), "feed must be gapless"
    for needed in ("SessionStart", "VicinityAlert", "Instruction", "Reassurance",
                   "OffTrackBegin", "OffTrackEnd", "HelpRequest", "AssistLogged",
                   "QuizPrompt", "QuizAnswer", "SessionEnd"):
        assert needed in types, f"fixture feed lacks {needed}"
    assert types[-1] == "SessionEnd"
    assert rows[-1]["position"] is not None, "final envelope needs a snapshot"

    trend = json.loads((FIXTURES / "trend.json").read_text())
    assert len(trend["series"]) == 2
    assert trend["series"][0]["accuracy"] is None, "first point must be the gap case"
    assert any(s["kind"] == "support_mode" for s in trend["suggestions"]), "no retune suggestion"

    neg = json.loads((FIXTURES / "negotiation.json").read_text())
    preview = json.loads((FIXTURES / "preview.json").read_text())
    assert neg["current"] == preview, "open view card must equal the direct preview"

    print(f"ok: {len(rows)} feed rows, {len(types)} events, fixtures in {FIXTURES}")


if __name__ == "__main__":
    sys.exit(record())
