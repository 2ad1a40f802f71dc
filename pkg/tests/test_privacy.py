"""Data classification, sync gating, and the consent ledger."""

from __future__ import annotations

import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routetrainer.canonical import sha256_hex
from routetrainer.errors import ClassificationError, ConsentError, SyncPolicyError
from routetrainer.privacy import (
    ConsentLedger,
    ConsentRecord,
    ConsentScope,
    DataClass,
    ItemKind,
    ManifestItem,
    SyncDestination,
    classify,
    gate_sync,
)


# ---------------------------------------------------------- classification

def test_video_never_leaves_device():
    assert classify(ItemKind.VIDEO_ASSET) is DataClass.LOCAL_ONLY


def test_raw_capture_data_is_peer_only():
    assert classify(ItemKind.RAW_ERW_SESSION) is DataClass.PEER_TRANSFERABLE
    assert classify(ItemKind.POI_PHOTO) is DataClass.PEER_TRANSFERABLE


def test_curated_photo_may_sync():
    assert classify(ItemKind.POI_PHOTO, curated=True) is DataClass.CLOUD_SYNCABLE


def test_working_artifacts_may_sync():
    assert classify(ItemKind.WORKING_ROUTE) is DataClass.CLOUD_SYNCABLE
    assert classify(ItemKind.SESSION_RECORD) is DataClass.CLOUD_SYNCABLE
    assert classify(ItemKind.NEGOTIATION_TRANSCRIPT) is DataClass.CLOUD_SYNCABLE


def test_unknown_kind_rejected():
    with pytest.raises(ClassificationError):
        classify("diary")  # type: ignore[arg-type]


def test_wire_values():
    assert DataClass.LOCAL_ONLY.value == "LOCAL_ONLY"
    assert DataClass.PEER_TRANSFERABLE.value == "PEER"
    assert DataClass.CLOUD_SYNCABLE.value == "CLOUD"


# ------------------------------------------------------------- sync gate

def _item(item_id: str, data_class: DataClass) -> ManifestItem:
    return ManifestItem(item_id=item_id, data_class=data_class, sha256=sha256_hex(item_id.encode()))


def test_cloud_gate_strict_raises_and_names_offenders():
    items = [
        _item("route", DataClass.CLOUD_SYNCABLE),
        _item("video", DataClass.LOCAL_ONLY),
        _item("trace", DataClass.PEER_TRANSFERABLE),
    ]
    with pytest.raises(SyncPolicyError) as exc:
        gate_sync(items, SyncDestination.CLOUD, strict=True)
    assert set(exc.value.offending) == {"video", "trace"}


def test_cloud_gate_lenient_strips():
    items = [
        _item("route", DataClass.CLOUD_SYNCABLE),
        _item("video", DataClass.LOCAL_ONLY),
        _item("trace", DataClass.PEER_TRANSFERABLE),
    ]
    report = gate_sync(items, SyncDestination.CLOUD, strict=False)
    assert [i.item_id for i in report.permitted] == ["route"]
    assert {i.item_id for i in report.stripped} == {"video", "trace"}


def test_peer_gate_passes_every_classified_item():
    # direct device-to-device links carry everything, cloud is the boundary
    items = [
        _item("video", DataClass.LOCAL_ONLY),
        _item("trace", DataClass.PEER_TRANSFERABLE),
        _item("route", DataClass.CLOUD_SYNCABLE),
    ]
    report = gate_sync(items, SyncDestination.PEER, strict=True)
    assert [i.item_id for i in report.permitted] == ["video", "trace", "route"]
    assert report.stripped == ()


@given(
    st.lists(
        st.tuples(st.integers(0, 10_000), st.sampled_from(list(DataClass))),
        max_size=30,
    ),
    st.booleans(),
)
@settings(max_examples=150)
def test_cloud_gate_never_passes_private_items(raw, strict):
    items = [_item(f"i{n}-{i}", dc) for i, (n, dc) in enumerate(raw)]
    try:
        report = gate_sync(items, SyncDestination.CLOUD, strict=strict)
    except SyncPolicyError as exc:
        assert strict
        assert exc.offending
        return
    for item in report.permitted:
        assert item.data_class is DataClass.CLOUD_SYNCABLE
    assert len(report.permitted) + len(report.stripped) == len(items)


# -------------------------------------------------------------- consents

_DISCLOSURE = "Location and training events are recorded for this session."


def _grant(ledger: ConsentLedger, consent_id: str = "c-1") -> ConsentRecord:
    return ledger.grant(
        user_id="user-1",
        scope=ConsentScope.TRAINING_TELEMETRY,
        disclosure=_DISCLOSURE,
        granted_ts=1_700_000_000_000,
        consent_id=consent_id,
    )


def test_consent_requires_disclosure():
    with pytest.raises(ConsentError):
        ConsentRecord(
            id="c-0",
            user_id="user-1",
            scope=ConsentScope.TRAINING_TELEMETRY,
            granted_ts=1,
            disclosure="  ",
        )
    with pytest.raises(ConsentError):
        ConsentLedger().grant(
            user_id="user-1",
            scope=ConsentScope.TRAINING_TELEMETRY,
            disclosure="",
            granted_ts=1,
        )


def test_spend_is_single_use():
    ledger = ConsentLedger()
    record = _grant(ledger)
    ledger.spend(record, session_id="s-1")
    assert ledger.is_spent(record.id)
    with pytest.raises(ConsentError):
        ledger.spend(record, session_id="s-2")


def test_get_unknown_consent():
    ledger = ConsentLedger()
    with pytest.raises(ConsentError):
        ledger.get("nope")


def test_duplicate_grant_rejected():
    ledger = ConsentLedger()
    _grant(ledger)
    with pytest.raises(ConsentError):
        _grant(ledger)


def test_ledger_rows_and_replay(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = ConsentLedger(path)
    rec_a = _grant(ledger, "c-a")
    rec_b = _grant(ledger, "c-b")
    ledger.spend(rec_a, session_id="s-1")

    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert all(
        set(r) == {"consent_id", "user_id", "scope", "granted_ts_ms", "session_id",
                   "disclosure_sha256"}
        for r in rows
    )
    spent = [r for r in rows if r["session_id"] is not None]
    assert len(spent) == 1 and spent[0]["consent_id"] == "c-a"
    # the ledger stores a digest of the disclosure text, not the text
    assert rows[0]["disclosure_sha256"] == rec_a.disclosure_sha256
    assert "recorded for this session" not in path.read_text()

    reloaded = ConsentLedger(path)
    with pytest.raises(ConsentError):
        reloaded.spend(rec_a, session_id="s-9")
    reloaded.spend(rec_b, session_id="s-2")


def test_spend_race_admits_exactly_one(tmp_path):
    ledger = ConsentLedger(tmp_path / "ledger.ndjson")
    record = _grant(ledger, "c-race")
    outcomes: list[bool] = []
    lock = threading.Lock()

    def worker(i: int) -> None:
        try:
            ledger.spend(record, session_id=f"s-{i}")
            ok = True
        except ConsentError:
            ok = False
        with lock:
            outcomes.append(ok)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count(True) == 1
