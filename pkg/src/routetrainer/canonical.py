"""Canonical JSON encoding used for files, hashes, and byte-equality checks."""

from __future__ import annotations

import hashlib
import json


def canonical_dumps(obj) -> str:
    """Serialize deterministically: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def canonical_bytes(obj) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
